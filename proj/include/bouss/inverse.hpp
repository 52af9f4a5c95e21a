#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bouss/banded.hpp"
#include "bouss/coefficients.hpp"
#include "bouss/error.hpp"
#include "bouss/fem.hpp"
#include "bouss/forward.hpp"
#include "bouss/lbfgsb.hpp"
#include "bouss/mesh.hpp"

namespace bouss {

/// Recover (N0, V0) from the state at the final time.
struct InverseSpec {
    Mesh mesh;
    CoefficientProfile profile;
    SolverConfig config;
    StatePair observed;
    StatePair initial_guess;          ///< empty means zero fields
    std::optional<Bounds> bounds;     ///< over the stacked control [N interior, V interior]
    double tikhonov_gamma = 0.0;
    LbfgsOptions optimizer;
    std::vector<int> snapshot_iters = {1, 2, 3, 4};
};

/// Cost, adjoint gradient and single-step linearizations for one InverseSpec.
/// The control is the interior nodal values of both fields, N block first.
class InverseProblem {
public:
    explicit InverseProblem(InverseSpec spec)
        : spec_(std::move(spec)), solver_(spec_.mesh, spec_.profile, spec_.config),
          mass_hat_(interleave_mass(solver_.system().mass())) {
        check_state(spec_.mesh, spec_.observed);
        if (!spec_.observed.satisfies_boundary())
            throw InvalidArgument("observed fields must vanish at both ends");
        if (spec_.initial_guess.size() == 0)
            spec_.initial_guess = StatePair::zeros(spec_.mesh.n_nodes());
        check_state(spec_.mesh, spec_.initial_guess);
        if (!(spec_.tikhonov_gamma >= 0.0) || !std::isfinite(spec_.tikhonov_gamma))
            throw InvalidArgument("tikhonov gamma must be finite and non-negative");
        if (spec_.bounds) {
            const auto& b = *spec_.bounds;
            if (b.lower.size() != n_controls() || b.upper.size() != n_controls())
                throw DimensionMismatch("bounds must have one entry per control");
            for (std::size_t i = 0; i < n_controls(); ++i)
                if (!(b.lower[i] <= b.upper[i]))
                    throw InvalidArgument("lower bound above upper bound at control " + std::to_string(i));
        }
        z_obs_ = system().pack(spec_.observed);
    }

    const InverseSpec& spec() const noexcept { return spec_; }
    const BoussinesqSystem& system() const noexcept { return solver_.system(); }
    const ForwardSolver& solver() const noexcept { return solver_; }
    std::size_t n_controls() const noexcept { return 2 * spec_.mesh.n_interior(); }

    std::vector<double> to_control(const StatePair& s) const {
        check_state(spec_.mesh, s);
        const std::size_t m = spec_.mesh.n_interior();
        std::vector<double> x(2 * m);
        for (std::size_t i = 0; i < m; ++i) {
            x[i] = s.N[i + 1];
            x[m + i] = s.V[i + 1];
        }
        return x;
    }

    StatePair from_control(std::span<const double> x) const {
        const std::size_t m = spec_.mesh.n_interior();
        if (x.size() != 2 * m)
            throw DimensionMismatch("control vector has the wrong length");
        return StatePair{with_boundary(x.subspan(0, m)), with_boundary(x.subspan(m, m))};
    }

    double cost(const StatePair& trial) const {
        check_state(spec_.mesh, trial);
        const auto traj = solver_.solve(trial);
        return misfit(system().pack(traj.final_state())) + regularization(trial);
    }

    struct Evaluation {
        double cost = 0.0;
        StatePair gradient; ///< full nodal, zero at both ends
    };

    Evaluation cost_and_gradient(const StatePair& trial) const {
        check_state(spec_.mesh, trial);
        const auto& sys = system();
        const double dt = spec_.config.dt, theta = spec_.config.theta;

        std::vector<std::vector<double>> z;
        z.reserve(spec_.config.n_steps + 1);
        solver_.march(trial, [&](std::size_t, double, const StatePair& s, int) { z.push_back(sys.pack(s)); });

        Evaluation out;
        out.cost = misfit(z.back()) + regularization(trial);

        auto d = z.back();
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] -= z_obs_[i];
        auto lambda = mass_hat_.multiply(d);
        for (std::size_t n = z.size() - 1; n-- > 0;)
            lambda = adjoint_step(z[n], z[n + 1], lambda, dt, theta);

        if (spec_.tikhonov_gamma > 0.0) {
            const auto az = sys.interleaved_h1_operator().multiply(z.front());
            for (std::size_t i = 0; i < lambda.size(); ++i)
                lambda[i] += spec_.tikhonov_gamma * az[i];
        }
        out.gradient = sys.unpack(lambda);
        return out;
    }

    /// Objective in control space for the optimizer.
    double evaluate(std::span<const double> x, std::vector<double>& grad) const {
        const auto e = cost_and_gradient(from_control(x));
        grad = to_control(e.gradient);
        return e.cost;
    }

    /// Derivative of one forward step z -> z_next applied to p: -J+^{-1} J- p.
    std::vector<double> tangent_step(std::span<const double> z, std::span<const double> z_next,
                                     std::span<const double> p, double dt, double theta) const {
        const auto rhs = explicit_jacobian(z, dt, theta).multiply(p);
        return BandedLU(system().step_jacobian(z_next, dt, theta)).solve(rhs);
    }

    /// Transpose of tangent_step: (A + dt (1 - theta) F'(z))^T J+^{-T} q.
    std::vector<double> adjoint_step(std::span<const double> z, std::span<const double> z_next,
                                     std::span<const double> q, double dt, double theta) const {
        const auto mu = BandedLU(system().step_jacobian(z_next, dt, theta).transposed()).solve(q);
        return explicit_jacobian(z, dt, theta).multiply_transposed(mu);
    }

private:
    static BandedMatrix interleave_mass(const BandedMatrix& m) {
        BandedMatrix out(2 * m.order(), 3, 3);
        for (std::size_t i = 0; i < m.order(); ++i)
            for (std::size_t j = m.row_begin(i); j < m.row_end(i); ++j) {
                out.at(2 * i, 2 * j) = m(i, j);
                out.at(2 * i + 1, 2 * j + 1) = m(i, j);
            }
        return out;
    }

    /// A + dt (1 - theta) F'(z), i.e. -dR/dz_old
    BandedMatrix explicit_jacobian(std::span<const double> z, double dt, double theta) const {
        BandedMatrix out(system().n_unknowns(), 3, 3);
        out.add_scaled(system().interleaved_h1_operator(), 1.0);
        out.add_scaled(system().flux_jacobian(z), dt * (1.0 - theta));
        return out;
    }

    double misfit(const std::vector<double>& z_final) const {
        auto d = z_final;
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] -= z_obs_[i];
        return 0.5 * mass_hat_.quadratic_form(d);
    }

    double regularization(const StatePair& s) const {
        if (spec_.tikhonov_gamma == 0.0)
            return 0.0;
        const double beta = spec_.config.beta;
        const double hn = h1_norm(spec_.mesh, s.N, beta), hv = h1_norm(spec_.mesh, s.V, beta);
        return 0.5 * spec_.tikhonov_gamma * (hn * hn + hv * hv);
    }

    InverseSpec spec_;
    ForwardSolver solver_;
    BandedMatrix mass_hat_;
    std::vector<double> z_obs_;
};

struct IterateSnapshot {
    int iter = 0;
    double cost = 0.0;
    StatePair state;
};

struct Reconstruction {
    StatePair recovered;
    OptimizationTrace trace;
    std::vector<IterateSnapshot> snapshots; ///< requested iterations that were reached
    std::vector<bool> active;               ///< per control, on a bound at the end
};

using ReconstructionObserver = std::function<void(const TraceEntry&)>;

inline Reconstruction reconstruct(const InverseSpec& spec, const ReconstructionObserver& progress = {}) {
    const InverseProblem problem(spec);
    Reconstruction out;
    auto objective = [&](std::span<const double> x, std::vector<double>& g) { return problem.evaluate(x, g); };
    auto observer = [&](int iter, std::span<const double> x, double cost) {
        const auto& wanted = problem.spec().snapshot_iters;
        if (std::find(wanted.begin(), wanted.end(), iter) != wanted.end())
            out.snapshots.push_back({iter, cost, problem.from_control(x)});
        if (progress) {
            TraceEntry e;
            e.iter = iter;
            e.cost = cost;
            progress(e);
        }
    };
    auto res = lbfgs_minimize(objective, problem.to_control(problem.spec().initial_guess), problem.spec().bounds,
                              problem.spec().optimizer, observer);
    out.recovered = problem.from_control(res.x);
    out.trace = std::move(res.trace);
    out.active = std::move(res.active);
    return out;
}

} // namespace bouss
