#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bouss/error.hpp"

namespace bouss {

/// Three-point Gauss-Legendre rule on the reference interval [0, 1].
struct GaussRule {
    static constexpr std::size_t size = 3;
    static constexpr std::array<double, 3> points = {
        0.5 - 0.3872983346207416885, // 0.5 * sqrt(3/5)
        0.5,
        0.5 + 0.3872983346207416885,
    };
    static constexpr std::array<double, 3> weights = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
};

/// Uniform partition of [a, b] carrying P1 nodal basis metadata.
class Mesh {
public:
    Mesh(double a, double b, std::size_t n_nodes) : a_(a), b_(b), n_nodes_(n_nodes) {
        if (!(std::isfinite(a) && std::isfinite(b)) || !(a < b))
            throw InvalidMesh("mesh requires finite a < b");
        if (n_nodes < 3)
            throw InvalidMesh("mesh requires at least 3 nodes, got " + std::to_string(n_nodes));
        h_ = (b - a) / static_cast<double>(n_nodes - 1);
    }

    double a() const noexcept { return a_; }
    double b() const noexcept { return b_; }
    double length() const noexcept { return b_ - a_; }
    double h() const noexcept { return h_; }
    std::size_t n_nodes() const noexcept { return n_nodes_; }
    std::size_t n_elements() const noexcept { return n_nodes_ - 1; }
    std::size_t n_interior() const noexcept { return n_nodes_ - 2; }

    /// Computed from the endpoints each time so no rounding accumulates.
    double node(std::size_t i) const noexcept {
        return a_ + static_cast<double>(i) * (b_ - a_) / static_cast<double>(n_nodes_ - 1);
    }

    std::vector<double> nodes() const {
        std::vector<double> xs(n_nodes_);
        for (std::size_t i = 0; i < n_nodes_; ++i)
            xs[i] = node(i);
        return xs;
    }

    /// Physical coordinate of Gauss point q in element e.
    double gauss_point(std::size_t e, std::size_t q) const noexcept {
        return node(e) + GaussRule::points[q] * h_;
    }

    double gauss_weight(std::size_t q) const noexcept { return GaussRule::weights[q] * h_; }

    /// Value at Gauss point q of element e of the P1 interpolant of nodal values f.
    static double interpolate(std::span<const double> f, std::size_t e, std::size_t q) noexcept {
        const double t = GaussRule::points[q];
        return f[e] * (1.0 - t) + f[e + 1] * t;
    }

    friend bool operator==(const Mesh&, const Mesh&) = default;

private:
    double a_;
    double b_;
    std::size_t n_nodes_;
    double h_{};
};

/// Nodal (N, V) at one time level. Both ends are held at zero.
struct StatePair {
    std::vector<double> N;
    std::vector<double> V;

    static StatePair zeros(std::size_t n_nodes) {
        return {std::vector<double>(n_nodes, 0.0), std::vector<double>(n_nodes, 0.0)};
    }

    std::size_t size() const noexcept { return N.size(); }

    void pin_boundary() {
        if (N.empty())
            return;
        N.front() = N.back() = 0.0;
        V.front() = V.back() = 0.0;
    }

    bool satisfies_boundary() const noexcept {
        return N.size() == V.size() && N.size() >= 2 && N.front() == 0.0 && N.back() == 0.0 &&
               V.front() == 0.0 && V.back() == 0.0;
    }

    friend bool operator==(const StatePair&, const StatePair&) = default;
};

inline void check_state(const Mesh& mesh, const StatePair& s) {
    if (s.N.size() != mesh.n_nodes() || s.V.size() != mesh.n_nodes())
        throw DimensionMismatch("state length " + std::to_string(s.N.size()) + "/" +
                                std::to_string(s.V.size()) + " does not match mesh with " +
                                std::to_string(mesh.n_nodes()) + " nodes");
    if (!s.satisfies_boundary())
        throw InvalidArgument("state violates the homogeneous Dirichlet condition");
}

/// Interior nodal values 1..n-2 of a full nodal vector.
inline std::vector<double> interior_of(std::span<const double> full) {
    if (full.size() < 2)
        return {};
    return {full.begin() + 1, full.end() - 1};
}

/// Full nodal vector with zero boundary values from interior values.
inline std::vector<double> with_boundary(std::span<const double> interior) {
    std::vector<double> full(interior.size() + 2, 0.0);
    for (std::size_t i = 0; i < interior.size(); ++i)
        full[i + 1] = interior[i];
    return full;
}

/// Samples f at every node and pins both ends to zero.
template <class F>
std::vector<double> sample_nodes(const Mesh& mesh, F&& f) {
    std::vector<double> v(mesh.n_nodes());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = f(mesh.node(i));
    v.front() = v.back() = 0.0;
    return v;
}

} // namespace bouss
