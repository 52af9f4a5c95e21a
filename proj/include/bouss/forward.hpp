#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bouss/banded.hpp"
#include "bouss/coefficients.hpp"
#include "bouss/error.hpp"
#include "bouss/fem.hpp"
#include "bouss/mesh.hpp"
#include "bouss/newton.hpp"

namespace bouss {

struct SolverConfig {
    double alpha = 0.1;
    double beta = 0.1;
    double theta = 0.5;
    double dt = 8.0 / 3000.0;
    std::size_t n_steps = 3000;
    double newton_tol = 1e-12;
    int newton_max_iter = 25;

    double final_time() const noexcept { return dt * static_cast<double>(n_steps); }

    void validate() const {
        if (!(alpha >= 0.0) || !std::isfinite(alpha))
            throw InvalidArgument("alpha must be non-negative");
        if (!(beta > 0.0))
            throw InvalidArgument("beta must be positive");
        if (!(theta > 0.0 && theta < 1.0))
            throw InvalidArgument("theta must lie in (0, 1)");
        if (!(dt > 0.0) || !std::isfinite(dt))
            throw InvalidArgument("dt must be positive");
        if (n_steps < 1)
            throw InvalidArgument("n_steps must be at least 1");
        if (!(newton_tol > 0.0) || newton_max_iter < 1)
            throw InvalidArgument("Newton tolerance and iteration cap must be positive");
    }
};

/// Semi-discrete P1 system  A dN/dt = F1(N, V),  A dV/dt = F2(N, V)  on interior DOFs, with
///     F1_i = <(1 + alpha c^2 N) V, phi_i'>,   F2_i = <c N + alpha c^2 V^2 / 2, phi_i'>,
///     A = M + (beta/6) S.
/// Unknowns are interleaved (N_1, V_1, N_2, V_2, ...), so every coupled Jacobian has
/// half-bandwidth 3.
class BoussinesqSystem {
public:
    BoussinesqSystem(const Mesh& mesh, const CoefficientProfile& profile, double alpha, double beta)
        : mesh_(mesh), alpha_(alpha), beta_(beta), samples_(profile, mesh), mass_(assemble_mass(mesh)),
          h1_(assemble_h1_operator(mesh, beta)), a_hat_(interleave(h1_)), a_hat_lu_(a_hat_) {}

    const Mesh& mesh() const noexcept { return mesh_; }
    double alpha() const noexcept { return alpha_; }
    double beta() const noexcept { return beta_; }
    const CoefficientSamples& samples() const noexcept { return samples_; }
    const BandedMatrix& mass() const noexcept { return mass_; }
    const BandedMatrix& h1_operator() const noexcept { return h1_; }
    /// A acting on both interleaved fields.
    const BandedMatrix& interleaved_h1_operator() const noexcept { return a_hat_; }
    const BandedLU& interleaved_h1_lu() const noexcept { return a_hat_lu_; }
    std::size_t n_unknowns() const noexcept { return 2 * mesh_.n_interior(); }

    std::vector<double> pack(const StatePair& s) const {
        const std::size_t m = mesh_.n_interior();
        std::vector<double> z(2 * m);
        for (std::size_t i = 0; i < m; ++i) {
            z[2 * i] = s.N[i + 1];
            z[2 * i + 1] = s.V[i + 1];
        }
        return z;
    }

    StatePair unpack(std::span<const double> z) const {
        StatePair s = StatePair::zeros(mesh_.n_nodes());
        for (std::size_t i = 0; i < mesh_.n_interior(); ++i) {
            s.N[i + 1] = z[2 * i];
            s.V[i + 1] = z[2 * i + 1];
        }
        return s;
    }

    /// Interleaved flux vector F(z).
    std::vector<double> flux(std::span<const double> z) const {
        const std::size_t n = mesh_.n_nodes();
        std::vector<double> f(n_unknowns(), 0.0);
        for (std::size_t e = 0; e + 1 < n; ++e) {
            const double n0 = node_value(z, e, 0), n1 = node_value(z, e + 1, 0);
            const double v0 = node_value(z, e, 1), v1 = node_value(z, e + 1, 1);
            double iq = 0.0, ir = 0.0;
            for (std::size_t q = 0; q < GaussRule::size; ++q) {
                const double t = GaussRule::points[q], w = GaussRule::weights[q];
                const double nq = n0 * (1.0 - t) + n1 * t;
                const double vq = v0 * (1.0 - t) + v1 * t;
                const double c = samples_.c(e, q), c2 = samples_.c2(e, q);
                iq += w * (1.0 + alpha_ * c2 * nq) * vq;
                ir += w * (c * nq + 0.5 * alpha_ * c2 * vq * vq);
            }
            // h * phi' = -1 on the left node, +1 on the right node
            if (e >= 1) {
                f[row(e, 0)] -= iq;
                f[row(e, 1)] -= ir;
            }
            if (e + 1 <= n - 2) {
                f[row(e + 1, 0)] += iq;
                f[row(e + 1, 1)] += ir;
            }
        }
        return f;
    }

    /// dF/dz at z, interleaved, half-bandwidth 3.
    BandedMatrix flux_jacobian(std::span<const double> z) const {
        const std::size_t n = mesh_.n_nodes();
        BandedMatrix jac(n_unknowns(), 3, 3);
        for (std::size_t e = 0; e + 1 < n; ++e) {
            const double n0 = node_value(z, e, 0), n1 = node_value(z, e + 1, 0);
            const double v0 = node_value(z, e, 1), v1 = node_value(z, e + 1, 1);
            // local blocks: [test node][trial node] for dF1/dN, dF1/dV, dF2/dN, dF2/dV
            double d1n[2] = {0, 0}, d1v[2] = {0, 0}, d2n[2] = {0, 0}, d2v[2] = {0, 0};
            for (std::size_t q = 0; q < GaussRule::size; ++q) {
                const double t = GaussRule::points[q], w = GaussRule::weights[q];
                const double nq = n0 * (1.0 - t) + n1 * t;
                const double vq = v0 * (1.0 - t) + v1 * t;
                const double c = samples_.c(e, q), c2 = samples_.c2(e, q);
                const double basis[2] = {1.0 - t, t};
                for (int j = 0; j < 2; ++j) {
                    d1n[j] += w * alpha_ * c2 * vq * basis[j];
                    d1v[j] += w * (1.0 + alpha_ * c2 * nq) * basis[j];
                    d2n[j] += w * c * basis[j];
                    d2v[j] += w * alpha_ * c2 * vq * basis[j];
                }
            }
            for (int il = 0; il < 2; ++il) {
                const std::size_t i = e + static_cast<std::size_t>(il);
                if (i == 0 || i == n - 1)
                    continue;
                const double sign = il == 0 ? -1.0 : 1.0;
                for (int jl = 0; jl < 2; ++jl) {
                    const std::size_t j = e + static_cast<std::size_t>(jl);
                    if (j == 0 || j == n - 1)
                        continue;
                    jac.add(row(i, 0), row(j, 0), sign * d1n[jl]);
                    jac.add(row(i, 0), row(j, 1), sign * d1v[jl]);
                    jac.add(row(i, 1), row(j, 0), sign * d2n[jl]);
                    jac.add(row(i, 1), row(j, 1), sign * d2v[jl]);
                }
            }
        }
        return jac;
    }

    /// Residual of one theta-step from z_old with step dt:
    ///     A (z - z_old) - dt [theta F(z) + (1 - theta) F(z_old)]
    std::vector<double> step_residual(std::span<const double> z, std::span<const double> z_old,
                                      double dt, double theta) const {
        auto r = explicit_part(z_old, dt, theta);
        const auto az = a_hat_.multiply(z);
        const auto fz = flux(z);
        for (std::size_t i = 0; i < r.size(); ++i)
            r[i] = az[i] - dt * theta * fz[i] - r[i];
        return r;
    }

    /// A z_old + dt (1 - theta) F(z_old)
    std::vector<double> explicit_part(std::span<const double> z_old, double dt, double theta) const {
        auto b = a_hat_.multiply(z_old);
        const auto f = flux(z_old);
        for (std::size_t i = 0; i < b.size(); ++i)
            b[i] += dt * (1.0 - theta) * f[i];
        return b;
    }

    /// A - dt theta F'(z)
    BandedMatrix step_jacobian(std::span<const double> z, double dt, double theta) const {
        BandedMatrix j = flux_jacobian(z);
        BandedMatrix out(n_unknowns(), 3, 3);
        out.add_scaled(a_hat_, 1.0);
        out.add_scaled(j, -dt * theta);
        return out;
    }

private:
    static BandedMatrix interleave(const BandedMatrix& a) {
        BandedMatrix out(2 * a.order(), 3, 3);
        for (std::size_t i = 0; i < a.order(); ++i)
            for (std::size_t j = a.row_begin(i); j < a.row_end(i); ++j) {
                out.at(2 * i, 2 * j) = a(i, j);
                out.at(2 * i + 1, 2 * j + 1) = a(i, j);
            }
        return out;
    }

    static std::size_t row(std::size_t node, std::size_t field) noexcept {
        return 2 * (node - 1) + field;
    }

    double node_value(std::span<const double> z, std::size_t node, std::size_t field) const noexcept {
        if (node == 0 || node == mesh_.n_nodes() - 1)
            return 0.0;
        return z[row(node, field)];
    }

    Mesh mesh_;
    double alpha_;
    double beta_;
    CoefficientSamples samples_;
    BandedMatrix mass_;
    BandedMatrix h1_;
    BandedMatrix a_hat_;
    BandedLU a_hat_lu_;
};

struct StepResult {
    StatePair state;
    int newton_iterations = 0;
    double residual_norm = 0.0;
    bool used_fallback = false;
};

/// Snapshots at t = 0, dt, ..., T. Kept in full for the adjoint sweep.
struct Trajectory {
    std::vector<StatePair> snapshots;
    std::vector<double> times;
    std::vector<int> newton_iterations; ///< one entry per step

    const StatePair& final_state() const { return snapshots.back(); }
    int max_newton_iterations() const {
        int m = 0;
        for (int k : newton_iterations)
            m = std::max(m, k);
        return m;
    }
};

class ForwardSolver {
public:
    ForwardSolver(const Mesh& mesh, const CoefficientProfile& profile, const SolverConfig& config)
        : config_((config.validate(), config)), system_(mesh, profile, config.alpha, config.beta) {}

    const BoussinesqSystem& system() const noexcept { return system_; }
    const SolverConfig& config() const noexcept { return config_; }
    const Mesh& mesh() const noexcept { return system_.mesh(); }

    StepResult step(const StatePair& state) const { return advance(state, config_.dt); }

    /// One theta-step with an arbitrary nonzero dt (negative dt marches backwards).
    StepResult advance(const StatePair& state, double dt) const {
        check_state(mesh(), state);
        const auto z_old = system_.pack(state);
        const auto rhs = system_.explicit_part(z_old, dt, config_.theta);
        const NewtonOptions opts{config_.newton_tol, config_.newton_max_iter};
        const double theta = config_.theta;

        auto residual_fn = [&](std::span<const double> z, std::vector<double>& r, BandedMatrix* jac) {
            const auto az = system_.interleaved_h1_operator().multiply(z);
            const auto fz = system_.flux(z);
            r.resize(z.size());
            for (std::size_t i = 0; i < z.size(); ++i)
                r[i] = az[i] - dt * theta * fz[i] - rhs[i];
            if (jac)
                *jac = system_.step_jacobian(z, dt, theta);
        };

        StepResult out;
        try {
            auto res = newton_solve(residual_fn, z_old, opts);
            out.state = system_.unpack(res.x);
            out.newton_iterations = res.iterations;
            out.residual_norm = res.residual_norm;
        } catch (const NewtonFailure&) {
            // retry once from a Picard-smoothed guess
            auto guess = z_old;
            for (int k = 0; k < 2; ++k) {
                auto b = system_.flux(guess);
                for (std::size_t i = 0; i < b.size(); ++i)
                    b[i] = rhs[i] + dt * theta * b[i];
                guess = system_.interleaved_h1_lu().solve(b);
            }
            auto res = newton_solve(residual_fn, guess, opts);
            out.state = system_.unpack(res.x);
            out.newton_iterations = res.iterations;
            out.residual_norm = res.residual_norm;
            out.used_fallback = true;
        }
        return out;
    }

    /// Runs all steps, calling observer(step_index, time, state, newton_iterations) for the
    /// initial state (step 0, zero iterations) and after every step.
    template <class Observer>
    void march(const StatePair& initial, Observer&& observer) const {
        check_state(mesh(), initial);
        observer(std::size_t{0}, 0.0, initial, 0);
        StatePair current = initial;
        for (std::size_t k = 1; k <= config_.n_steps; ++k) {
            StepResult r;
            try {
                r = step(current);
            } catch (const NewtonFailure& e) {
                throw StepFailure(k, e.residual_norm(), e.what());
            } catch (const SolverError& e) {
                throw StepFailure(k, std::nan(""), e.what());
            }
            current = std::move(r.state);
            observer(k, static_cast<double>(k) * config_.dt, current, r.newton_iterations);
        }
    }

    Trajectory solve(const StatePair& initial) const {
        Trajectory traj;
        traj.snapshots.reserve(config_.n_steps + 1);
        traj.times.reserve(config_.n_steps + 1);
        march(initial, [&](std::size_t k, double t, const StatePair& s, int its) {
            traj.snapshots.push_back(s);
            traj.times.push_back(t);
            if (k > 0)
                traj.newton_iterations.push_back(its);
        });
        return traj;
    }

private:
    SolverConfig config_;
    BoussinesqSystem system_;
};

inline StatePair step(const Mesh& mesh, const CoefficientProfile& profile, const SolverConfig& config,
                      const StatePair& state) {
    return ForwardSolver(mesh, profile, config).step(state).state;
}

inline Trajectory solve_forward(const Mesh& mesh, const CoefficientProfile& profile,
                                const SolverConfig& config, const StatePair& initial) {
    return ForwardSolver(mesh, profile, config).solve(initial);
}

} // namespace bouss
