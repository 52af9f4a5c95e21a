#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bouss/banded.hpp"
#include "bouss/error.hpp"

namespace bouss {

struct NewtonOptions {
    double tol = 1e-12; ///< on the residual infinity norm
    int max_iter = 25;
};

struct NewtonResult {
    std::vector<double> x;
    int iterations = 0;
    double residual_norm = 0.0;
};

inline double inf_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) {
        if (!std::isfinite(x))
            return x;
        m = std::max(m, std::abs(x));
    }
    return m;
}

/// Newton iteration on a system with banded Jacobian. The callback fills the residual
/// and, when given a non-null pointer, the Jacobian at x:
///     system(std::span<const double> x, std::vector<double>& residual, BandedMatrix* jacobian)
template <class System>
NewtonResult newton_solve(System&& system, std::vector<double> x, const NewtonOptions& options) {
    std::vector<double> residual;
    BandedMatrix jacobian;
    NewtonResult result;

    system(std::span<const double>(x), residual, nullptr);
    double norm = inf_norm(residual);
    for (int it = 0;; ++it) {
        if (!std::isfinite(norm))
            throw Divergence("non-finite residual in Newton iteration " + std::to_string(it));
        if (norm <= options.tol) {
            result.x = std::move(x);
            result.iterations = it;
            result.residual_norm = norm;
            return result;
        }
        if (it >= options.max_iter)
            throw NewtonFailure(it, norm);

        system(std::span<const double>(x), residual, &jacobian);
        const auto delta = BandedLU(jacobian).solve(residual);
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] -= delta[i];
        system(std::span<const double>(x), residual, nullptr);
        norm = inf_norm(residual);
    }
}

} // namespace bouss
