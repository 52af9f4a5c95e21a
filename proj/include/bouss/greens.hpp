#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bouss/banded.hpp"
#include "bouss/coefficients.hpp"
#include "bouss/error.hpp"
#include "bouss/fem.hpp"
#include "bouss/forward.hpp"
#include "bouss/mesh.hpp"

namespace bouss {

/// Which one-sided limit of the derivative kernel to take on the diagonal.
enum class Side { none, left, right };

/// Green's function of I - (beta/6) d^2/dxi^2 on [0, L] with homogeneous Dirichlet data,
/// and its derivative in the source variable. Coordinates are relative to the left end.
class Kernel {
public:
    static constexpr double max_scaled_length = 700.0;
    static constexpr double log_scaling_threshold = 30.0;

    Kernel(double length, double beta) : L_(length), beta_(beta) {
        if (!(length > 0.0) || !std::isfinite(length))
            throw InvalidArgument("kernel length must be positive and finite");
        if (!(beta > 0.0) || !std::isfinite(beta))
            throw InvalidArgument("kernel beta must be positive and finite");
        ell_ = std::sqrt(beta / 6.0);
        inv_ell_ = 1.0 / ell_;
        scaled_ = L_ * inv_ell_;
        if (scaled_ > max_scaled_length)
            throw InvalidArgument("L / sqrt(beta/6) = " + std::to_string(scaled_) +
                                  " exceeds " + std::to_string(max_scaled_length));
        sinh_scaled_ = std::sinh(scaled_);
    }

    double length() const noexcept { return L_; }
    double beta() const noexcept { return beta_; }
    double decay_length() const noexcept { return ell_; }
    double scaled_length() const noexcept { return scaled_; }
    bool log_scaled() const noexcept { return scaled_ > log_scaling_threshold; }

    double g(double xi, double s) const {
        xi = clamp_arg(xi, "xi");
        s = clamp_arg(s, "s");
        const double a = (L_ - std::abs(s - xi)) * inv_ell_;
        const double b = (L_ - xi - s) * inv_ell_;
        return (cosh_ratio(a) - cosh_ratio(b)) * 0.5 * inv_ell_;
    }

    double k(double xi, double s, Side side = Side::none) const {
        xi = clamp_arg(xi, "xi");
        s = clamp_arg(s, "s");
        double sign;
        if (xi > s)
            sign = 1.0;
        else if (xi < s)
            sign = -1.0;
        else if (side == Side::left)
            sign = 1.0;
        else if (side == Side::right)
            sign = -1.0;
        else
            throw DomainError("derivative kernel is discontinuous at xi = s; request a side");
        const double a = (L_ - std::abs(xi - s)) * inv_ell_;
        const double b = (L_ - xi - s) * inv_ell_;
        return 3.0 / beta_ * (sinh_ratio(b) + sign * sinh_ratio(a));
    }

    /// d/dxi of k off the diagonal.
    double dk_dxi(double xi, double s) const {
        xi = clamp_arg(xi, "xi");
        s = clamp_arg(s, "s");
        const double a = (L_ - std::abs(xi - s)) * inv_ell_;
        const double b = (L_ - xi - s) * inv_ell_;
        return -3.0 / beta_ * inv_ell_ * (cosh_ratio(a) + cosh_ratio(b));
    }

private:
    double clamp_arg(double x, const char* name) const {
        const double slack = 1e-12 * L_;
        if (!(x >= -slack && x <= L_ + slack))
            throw DomainError(std::string(name) + " = " + std::to_string(x) + " outside [0, " +
                              std::to_string(L_) + "]");
        return std::clamp(x, 0.0, L_);
    }

    // cosh(x) / sinh(L/ell) and sinh(x) / sinh(L/ell) for |x| <= L/ell
    double cosh_ratio(double x) const {
        if (!log_scaled())
            return std::cosh(x) / sinh_scaled_;
        return (std::exp(x - scaled_) + std::exp(-x - scaled_)) / (1.0 - std::exp(-2.0 * scaled_));
    }
    double sinh_ratio(double x) const {
        if (!log_scaled())
            return std::sinh(x) / sinh_scaled_;
        return (std::exp(x - scaled_) - std::exp(-x - scaled_)) / (1.0 - std::exp(-2.0 * scaled_));
    }

    double L_;
    double beta_;
    double ell_ = 0.0;
    double inv_ell_ = 0.0;
    double scaled_ = 0.0;
    double sinh_scaled_ = 0.0;
};

inline double green_g(const Kernel& kernel, double xi, double s) { return kernel.g(xi, s); }
inline double green_k(const Kernel& kernel, double xi, double s, Side side = Side::none) {
    return kernel.k(xi, s, side);
}

namespace detail {

inline void check_kernel_mesh(const Kernel& kernel, const Mesh& mesh) {
    if (std::abs(kernel.length() - mesh.length()) > 1e-12 * mesh.length())
        throw DimensionMismatch("kernel length " + std::to_string(kernel.length()) +
                                " does not match mesh span " + std::to_string(mesh.length()));
}

/// Dense row-major quadrature weights: row i holds w_q h kern(xi_i, s_eq) for every
/// element e and Gauss point q. Elements end at nodes, so each integral is split at xi_i.
template <class KernelFn>
std::vector<double> quadrature_rows(const Mesh& mesh, KernelFn&& kern) {
    const std::size_t n = mesh.n_nodes();
    const std::size_t cols = mesh.n_elements() * GaussRule::size;
    std::vector<double> w(n * cols, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = mesh.node(i) - mesh.a();
        for (std::size_t e = 0; e < mesh.n_elements(); ++e)
            for (std::size_t q = 0; q < GaussRule::size; ++q)
                w[i * cols + e * GaussRule::size + q] =
                    mesh.gauss_weight(q) * kern(xi, mesh.gauss_point(e, q) - mesh.a());
    }
    return w;
}

inline std::vector<double> apply_rows(const std::vector<double>& w, std::size_t n,
                                      std::span<const double> values_at_gauss) {
    const std::size_t cols = values_at_gauss.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = w.data() + i * cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j)
            acc += row[j] * values_at_gauss[j];
        out[i] = acc;
    }
    return out;
}

inline std::vector<double> at_gauss_points(const Mesh& mesh, std::span<const double> f) {
    std::vector<double> out(mesh.n_elements() * GaussRule::size);
    for (std::size_t e = 0; e < mesh.n_elements(); ++e)
        for (std::size_t q = 0; q < GaussRule::size; ++q)
            out[e * GaussRule::size + q] = Mesh::interpolate(f, e, q);
    return out;
}

template <class KernelFn>
std::vector<double> integral_operator(const Kernel& kernel, const Mesh& mesh,
                                      std::span<const double> phi, KernelFn&& kern) {
    check_kernel_mesh(kernel, mesh);
    check_nodal(mesh, phi);
    const auto w = quadrature_rows(mesh, kern);
    return apply_rows(w, mesh.n_nodes(), at_gauss_points(mesh, phi));
}

} // namespace detail

/// xi_i -> int G(xi_i, s) phi(s) ds for the P1 interpolant of phi.
inline std::vector<double> phi1(const Kernel& kernel, std::span<const double> phi, const Mesh& mesh) {
    return detail::integral_operator(kernel, mesh, phi,
                                     [&](double xi, double s) { return kernel.g(xi, s); });
}

/// Same with the derivative kernel.
inline std::vector<double> phi2(const Kernel& kernel, std::span<const double> phi, const Mesh& mesh) {
    return detail::integral_operator(kernel, mesh, phi,
                                     [&](double xi, double s) { return kernel.k(xi, s); });
}

struct PicardOptions {
    int max_sweeps = 200;
    double tol = 1e-12;
    int growth_limit = 3; ///< consecutive growing sweeps that count as non-contraction
};

struct PicardResult {
    Trajectory trajectory;
    int sweeps = 0;
    std::vector<double> sweep_differences;
    double contraction_factor = 0.0; ///< largest ratio of successive sweep differences
};

/// Fixed-point iteration on the time-integrated equations
///   N = N0 + int_0^t int K (1 + alpha c^2 N) V,   V = V0 + int_0^t int K (c N + alpha c^2 V^2 / 2),
/// trapezoidal in time on n_time uniform steps, Gauss quadrature in space. Each sweep
/// refreshes every time level from the previous iterate.
class PicardSolver {
public:
    PicardSolver(const Kernel& kernel, const Mesh& mesh, const CoefficientProfile& profile, double alpha)
        : kernel_(kernel), mesh_(mesh), samples_(profile, mesh), alpha_(alpha) {
        detail::check_kernel_mesh(kernel, mesh);
        if (!(alpha >= 0.0) || !std::isfinite(alpha))
            throw InvalidArgument("alpha must be finite and non-negative");
        weights_ = detail::quadrature_rows(mesh, [&](double xi, double s) { return kernel.k(xi, s); });
    }

    const Mesh& mesh() const noexcept { return mesh_; }

    /// Right-hand side of both equations at one time level.
    StatePair rates(const StatePair& s) const {
        const std::size_t cols = mesh_.n_elements() * GaussRule::size;
        std::vector<double> f1(cols), f2(cols);
        for (std::size_t e = 0; e < mesh_.n_elements(); ++e)
            for (std::size_t q = 0; q < GaussRule::size; ++q) {
                const double nq = Mesh::interpolate(s.N, e, q);
                const double vq = Mesh::interpolate(s.V, e, q);
                const std::size_t j = e * GaussRule::size + q;
                f1[j] = (1.0 + alpha_ * samples_.c2(e, q) * nq) * vq;
                f2[j] = samples_.c(e, q) * nq + 0.5 * alpha_ * samples_.c2(e, q) * vq * vq;
            }
        StatePair r{detail::apply_rows(weights_, mesh_.n_nodes(), f1),
                    detail::apply_rows(weights_, mesh_.n_nodes(), f2)};
        r.pin_boundary();
        return r;
    }

    /// One application of the fixed-point map to a whole trajectory.
    std::vector<StatePair> sweep(const std::vector<StatePair>& iterate, double dt) const {
        std::vector<StatePair> out(iterate.size());
        out[0] = iterate[0];
        StatePair prev = rates(iterate[0]);
        for (std::size_t k = 1; k < iterate.size(); ++k) {
            StatePair cur = rates(iterate[k]);
            out[k] = out[k - 1];
            for (std::size_t i = 0; i < mesh_.n_nodes(); ++i) {
                out[k].N[i] += 0.5 * dt * (prev.N[i] + cur.N[i]);
                out[k].V[i] += 0.5 * dt * (prev.V[i] + cur.V[i]);
            }
            prev = std::move(cur);
        }
        return out;
    }

    /// max over time levels of h1(dN) + h1(dV)
    double distance(const std::vector<StatePair>& x, const std::vector<StatePair>& y) const {
        double worst = 0.0;
        std::vector<double> dn(mesh_.n_nodes()), dv(mesh_.n_nodes());
        for (std::size_t k = 0; k < x.size(); ++k) {
            for (std::size_t i = 0; i < mesh_.n_nodes(); ++i) {
                dn[i] = x[k].N[i] - y[k].N[i];
                dv[i] = x[k].V[i] - y[k].V[i];
            }
            worst = std::max(worst, h1_norm(mesh_, dn, kernel_.beta()) + h1_norm(mesh_, dv, kernel_.beta()));
        }
        return worst;
    }

    PicardResult solve(const StatePair& initial, double T, std::size_t n_time,
                       const PicardOptions& options = {}) const {
        check_state(mesh_, initial);
        if (!(T > 0.0) || !std::isfinite(T))
            throw InvalidArgument("final time must be positive");
        if (n_time < 1)
            throw InvalidArgument("need at least one time step");
        const double dt = T / static_cast<double>(n_time);
        StatePair start = initial;
        start.pin_boundary();

        std::vector<StatePair> iterate(n_time + 1, start);
        PicardResult result;
        int growing = 0;
        for (int sweep_index = 1; sweep_index <= options.max_sweeps; ++sweep_index) {
            auto next = sweep(iterate, dt);
            const double d = distance(next, iterate);
            if (!std::isfinite(d))
                throw NonContraction("Picard sweep produced a non-finite iterate", result.sweep_differences);
            iterate = std::move(next);
            auto& diffs = result.sweep_differences;
            if (!diffs.empty() && diffs.back() > 0.0)
                result.contraction_factor = std::max(result.contraction_factor, d / diffs.back());
            growing = (!diffs.empty() && d > diffs.back()) ? growing + 1 : 0;
            diffs.push_back(d);
            result.sweeps = sweep_index;
            if (d <= options.tol)
                break;
            if (growing >= options.growth_limit)
                throw NonContraction("Picard sweep differences grew for " + std::to_string(growing) +
                                         " consecutive sweeps",
                                     diffs);
            if (sweep_index == options.max_sweeps)
                throw NonContraction("Picard iteration did not reach tolerance in " +
                                         std::to_string(options.max_sweeps) + " sweeps",
                                     diffs);
        }
        result.trajectory.snapshots = std::move(iterate);
        result.trajectory.times.resize(n_time + 1);
        for (std::size_t k = 0; k <= n_time; ++k)
            result.trajectory.times[k] = k == n_time ? T : dt * static_cast<double>(k);
        result.trajectory.newton_iterations.assign(n_time + 1, 0);
        return result;
    }

private:
    Kernel kernel_;
    Mesh mesh_;
    CoefficientSamples samples_;
    double alpha_;
    std::vector<double> weights_;
};

inline PicardResult picard_solve(const Kernel& kernel, const Mesh& mesh, const CoefficientProfile& profile,
                                 double alpha, const StatePair& initial, double T, std::size_t n_time,
                                 const PicardOptions& options = {}) {
    return PicardSolver(kernel, mesh, profile, alpha).solve(initial, T, n_time, options);
}

struct ContractionEstimate {
    double C1 = 0.0;        ///< power-iteration norm of phi1, L2 -> H1
    double C2 = 0.0;        ///< same for phi2
    double C1_bound = 0.0;  ///< from L2 norms of the kernels
    double C2_bound = 0.0;
    double R = 0.0;
    double data_norm = 0.0; ///< |N0|_H1 + |V0|_H1
    double c_norm = 0.0;    ///< |c|_L2
    double c2_norm = 0.0;   ///< |c^2|_L2
    double T1 = 0.0;        ///< ball is mapped into itself up to here
    double T2 = 0.0;        ///< map contracts strictly below here
    double T0 = 0.0;
    double growth_constant = 0.0; ///< stand-in for the undefined constant of the a-priori bound
};

namespace detail {

/// sup |B x|_A / |x|_M over interior-supported P1 inputs, by power iteration on
/// M^-1 B^T A B. Output values live on interior nodes too (the kernels vanish at both ends).
inline double operator_norm_l2_h1(const Mesh& mesh, double beta, const std::vector<double>& rows,
                                  std::uint32_t seed, int max_iter = 200) {
    const std::size_t m = mesh.n_interior();
    const std::size_t cols = mesh.n_elements() * GaussRule::size;
    // B[i][j]: row of node i+1 against hat j+1
    std::vector<double> b(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = rows.data() + (i + 1) * cols;
        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t node = j + 1;
            double acc = 0.0;
            for (std::size_t q = 0; q < GaussRule::size; ++q) {
                const double x = GaussRule::points[q];
                acc += row[(node - 1) * GaussRule::size + q] * x;       // rising half
                acc += row[node * GaussRule::size + q] * (1.0 - x);     // falling half
            }
            b[i * m + j] = acc;
        }
    }
    const BandedMatrix a = assemble_h1_operator(mesh, beta);
    const BandedMatrix mass = assemble_mass(mesh);
    const BandedLU mass_lu(mass);

    std::mt19937 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<double> x(m);
    for (auto& v : x)
        v = normal(rng);

    auto apply_b = [&](const std::vector<double>& v, bool transpose) {
        std::vector<double> out(m, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                if (transpose)
                    out[j] += b[i * m + j] * v[i];
                else
                    out[i] += b[i * m + j] * v[j];
            }
        return out;
    };

    double sigma2 = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        const double xm = mass.quadratic_form(x);
        const auto bx = apply_b(x, false);
        const double next = a.quadratic_form(bx) / xm;
        auto y = mass_lu.solve(apply_b(a.multiply(bx), true));
        const double scale = std::sqrt(mass.quadratic_form(y));
        for (auto& v : y)
            v /= scale;
        x = std::move(y);
        const bool done = it > 0 && std::abs(next - sigma2) <= 1e-13 * next;
        sigma2 = next;
        if (done)
            break;
    }
    return std::sqrt(sigma2);
}

/// L2 norm over the square of a kernel. Gauss in xi; in s the element holding xi is cut
/// in two at xi so no rule straddles the diagonal.
template <class KernelFn>
double kernel_l2_norm(const Mesh& mesh, KernelFn&& kern) {
    auto gauss = [&](double lo, double hi, double xi) {
        double acc = 0.0;
        for (std::size_t q = 0; q < GaussRule::size; ++q) {
            const double v = kern(xi, lo + GaussRule::points[q] * (hi - lo));
            acc += GaussRule::weights[q] * (hi - lo) * v * v;
        }
        return acc;
    };
    double acc = 0.0;
    for (std::size_t e1 = 0; e1 < mesh.n_elements(); ++e1)
        for (std::size_t q1 = 0; q1 < GaussRule::size; ++q1) {
            const double xi = mesh.gauss_point(e1, q1) - mesh.a();
            double inner = 0.0;
            for (std::size_t e2 = 0; e2 < mesh.n_elements(); ++e2) {
                const double lo = mesh.node(e2) - mesh.a(), hi = mesh.node(e2 + 1) - mesh.a();
                inner += e2 == e1 ? gauss(lo, xi, xi) + gauss(xi, hi, xi) : gauss(lo, hi, xi);
            }
            acc += mesh.gauss_weight(q1) * inner;
        }
    return std::sqrt(acc);
}

/// Positive root u of d u + p u^2 + r u^3 = R (left side increasing from 0).
inline double cubic_root(double d, double p, double r, double R) {
    auto f = [&](double u) { return ((r * u + p) * u + d) * u - R; };
    double hi = 1.0;
    while (f(hi) < 0.0)
        hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0.0 ? lo : hi) = mid;
    }
    return lo;
}

} // namespace detail

/// Horizons of the self-map and contraction conditions with numerically estimated
/// operator constants. The analytic constants are reported next to them.
inline ContractionEstimate estimate_contraction(const Kernel& kernel, const Mesh& mesh,
                                                const CoefficientProfile& profile, double alpha,
                                                double R, double data_norm, std::uint32_t seed = 12345) {
    detail::check_kernel_mesh(kernel, mesh);
    if (!(R > 0.0) || !std::isfinite(R))
        throw InvalidArgument("ball radius must be positive");
    if (!(data_norm >= 0.0))
        throw InvalidArgument("data norm must be non-negative");
    const double beta = kernel.beta();
    const double ell = kernel.decay_length();
    const double L = kernel.length();
    const double sqrtL = std::sqrt(L);

    ContractionEstimate est;
    est.R = R;
    est.data_norm = data_norm;
    const auto g_rows = detail::quadrature_rows(mesh, [&](double xi, double s) { return kernel.g(xi, s); });
    const auto k_rows = detail::quadrature_rows(mesh, [&](double xi, double s) { return kernel.k(xi, s); });
    est.C1 = detail::operator_norm_l2_h1(mesh, beta, g_rows, seed);
    est.C2 = detail::operator_norm_l2_h1(mesh, beta, k_rows, seed + 1);

    const double g_norm = detail::kernel_l2_norm(mesh, [&](double x, double s) { return kernel.g(x, s); });
    const double k_norm = detail::kernel_l2_norm(mesh, [&](double x, double s) { return kernel.k(x, s); });
    const double dk_norm = detail::kernel_l2_norm(mesh, [&](double x, double s) { return kernel.dk_dxi(x, s); });
    est.C1_bound = std::sqrt(g_norm * g_norm + beta / 6.0 * k_norm * k_norm);
    est.C2_bound = std::sqrt(k_norm * k_norm + beta / 6.0 * 2.0 * (36.0 / (beta * beta) + dk_norm * dk_norm));

    const CoefficientSamples samples(profile, mesh);
    double c_sq = 0.0, c2_sq = 0.0;
    for (std::size_t e = 0; e < mesh.n_elements(); ++e)
        for (std::size_t q = 0; q < GaussRule::size; ++q) {
            c_sq += mesh.gauss_weight(q) * samples.c2(e, q);
            c2_sq += mesh.gauss_weight(q) * samples.c2(e, q) * samples.c2(e, q);
        }
    est.c_norm = std::sqrt(c_sq);
    est.c2_norm = std::sqrt(c2_sq);

    const double lead = sqrtL / ell;
    const double linear = est.C1 * (sqrtL + est.c_norm);
    // self-map: u (d + lead (linear + 3 alpha C2 |c^2| sqrtL u R / (2 ell)) u R) = R, u = sqrt(T1)
    const double p = lead * linear * R;
    const double r = lead * 3.0 * alpha * est.C2 * est.c2_norm * sqrtL * R * R / (2.0 * ell);
    const double u = detail::cubic_root(data_norm, p, r, R);
    est.T1 = u * u;
    const double bracket = linear + alpha * est.C2 * est.c2_norm * (1.0 + 2.0 * R);
    est.T2 = std::nextafter(1.0 / (lead * bracket), 0.0);
    while (lead * est.T2 * bracket >= 1.0)
        est.T2 = std::nextafter(est.T2, 0.0);
    est.T0 = std::min(est.T1, est.T2);
    est.growth_constant = linear + alpha * est.C2 * est.c2_norm * 4.0 * R;
    return est;
}

/// Kernel identity residuals on a grid of interior points.
struct KernelIdentityReport {
    double boundary_max = 0.0; ///< max |G(0,s)|, |G(L,s)|
    double symmetry_max = 0.0; ///< max |G(xi,s) - G(s,xi)|
    double jump_max_rel = 0.0; ///< max |jump - 6/beta| / (6/beta)
    std::size_t points = 0;
};

inline KernelIdentityReport kernel_identities(const Kernel& kernel, std::size_t points = 50) {
    KernelIdentityReport rep;
    rep.points = points;
    const double L = kernel.length();
    const double jump = 6.0 / kernel.beta();
    for (std::size_t i = 0; i < points; ++i) {
        const double xi = L * (static_cast<double>(i) + 0.5) / static_cast<double>(points);
        rep.boundary_max = std::max({rep.boundary_max, std::abs(kernel.g(0.0, xi)), std::abs(kernel.g(L, xi))});
        for (std::size_t j = 0; j < points; ++j) {
            const double s = L * (static_cast<double>(j) + 0.25) / static_cast<double>(points);
            rep.symmetry_max = std::max(rep.symmetry_max, std::abs(kernel.g(xi, s) - kernel.g(s, xi)));
        }
        const double d = kernel.k(xi, xi, Side::left) - kernel.k(xi, xi, Side::right);
        rep.jump_max_rel = std::max(rep.jump_max_rel, std::abs(d - jump) / jump);
    }
    return rep;
}

} // namespace bouss
