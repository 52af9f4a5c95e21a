#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bouss/banded.hpp"
#include "bouss/error.hpp"
#include "bouss/mesh.hpp"

namespace bouss {

// P1 element matrices on a uniform mesh. All assembled matrices act on interior DOFs
// only: node i (1 <= i <= n-2) maps to row i-1; the two constrained nodes are eliminated.

/// Tridiagonal mass matrix: 2h/3 on the diagonal, h/6 off it.
inline BandedMatrix assemble_mass(const Mesh& mesh) {
    const std::size_t m = mesh.n_interior();
    const double h = mesh.h();
    BandedMatrix mass(m, 1, 1);
    for (std::size_t i = 0; i < m; ++i) {
        mass.at(i, i) = 2.0 * h / 3.0;
        if (i + 1 < m) {
            mass.at(i, i + 1) = h / 6.0;
            mass.at(i + 1, i) = h / 6.0;
        }
    }
    return mass;
}

/// Tridiagonal stiffness matrix: 2/h on the diagonal, -1/h off it. The beta/6 factor
/// belongs to the caller.
inline BandedMatrix assemble_stiffness(const Mesh& mesh) {
    const std::size_t m = mesh.n_interior();
    const double h = mesh.h();
    BandedMatrix stiff(m, 1, 1);
    for (std::size_t i = 0; i < m; ++i) {
        stiff.at(i, i) = 2.0 / h;
        if (i + 1 < m) {
            stiff.at(i, i + 1) = -1.0 / h;
            stiff.at(i + 1, i) = -1.0 / h;
        }
    }
    return stiff;
}

/// M + (beta/6) S, the operator multiplying the time derivative.
inline BandedMatrix assemble_h1_operator(const Mesh& mesh, double beta) {
    if (!(beta > 0.0))
        throw InvalidArgument("beta must be positive");
    BandedMatrix a = assemble_mass(mesh);
    a.add_scaled(assemble_stiffness(mesh), beta / 6.0);
    return a;
}

/// F_i = integral of g(xi) phi_i'(xi) over the mesh, for interior nodes i, with the
/// three-point Gauss rule per element. The integrand is called as g(element, point, xi).
template <class Integrand>
    requires std::invocable<Integrand&, std::size_t, std::size_t, double>
std::vector<double> assemble_flux_load(const Mesh& mesh, Integrand&& g) {
    const std::size_t n = mesh.n_nodes();
    std::vector<double> full(n, 0.0);
    const double inv_h = 1.0 / mesh.h();
    for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
        double integral = 0.0;
        for (std::size_t q = 0; q < GaussRule::size; ++q)
            integral += mesh.gauss_weight(q) * g(e, q, mesh.gauss_point(e, q));
        full[e] -= integral * inv_h;
        full[e + 1] += integral * inv_h;
    }
    return interior_of(full);
}

template <class Integrand>
    requires std::invocable<Integrand&, double>
std::vector<double> assemble_flux_load(const Mesh& mesh, Integrand&& g) {
    return assemble_flux_load(mesh, [&g](std::size_t, std::size_t, double xi) { return g(xi); });
}

namespace detail {

inline void check_nodal(const Mesh& mesh, std::span<const double> f) {
    if (f.size() != mesh.n_nodes())
        throw DimensionMismatch("nodal vector has length " + std::to_string(f.size()) +
                                ", mesh has " + std::to_string(mesh.n_nodes()) + " nodes");
}

} // namespace detail

/// Mass-weighted inner product of two full nodal vectors (exact for P1 interpolants).
inline double l2_inner(const Mesh& mesh, std::span<const double> f, std::span<const double> g) {
    detail::check_nodal(mesh, f);
    detail::check_nodal(mesh, g);
    const double h = mesh.h();
    double acc = 0.0;
    for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
        const double f0 = f[e], f1 = f[e + 1], g0 = g[e], g1 = g[e + 1];
        acc += (2.0 * f0 * g0 + f0 * g1 + f1 * g0 + 2.0 * f1 * g1);
    }
    return acc * h / 6.0;
}

inline double l2_norm(const Mesh& mesh, std::span<const double> f) {
    return std::sqrt(l2_inner(mesh, f, f));
}

/// ||f'||_{L2} of the P1 interpolant.
inline double h1_seminorm(const Mesh& mesh, std::span<const double> f) {
    detail::check_nodal(mesh, f);
    double acc = 0.0;
    for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
        const double d = f[e + 1] - f[e];
        acc += d * d;
    }
    return std::sqrt(acc / mesh.h());
}

/// (||f||^2 + (beta/6) ||f'||^2)^{1/2}
inline double h1_norm(const Mesh& mesh, std::span<const double> f, double beta) {
    if (!(beta > 0.0))
        throw InvalidArgument("h1_norm: beta must be positive");
    const double l2 = l2_norm(mesh, f);
    const double semi = h1_seminorm(mesh, f);
    return std::sqrt(l2 * l2 + beta / 6.0 * semi * semi);
}

} // namespace bouss
