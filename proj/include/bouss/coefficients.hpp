#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iterator>
#include <numbers>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "bouss/error.hpp"
#include "bouss/mesh.hpp"

namespace bouss {

/// c(xi) = base + amp_sin sin(wavenumber xi) + amp_gauss exp(-((xi - center)/width)^2)
struct GaussSine {
    double base = 1.0;
    double amp_sin = 0.0;
    double wavenumber = 0.0;
    double amp_gauss = 0.0;
    double center = 0.0;
    double width = 1.0;

    friend bool operator==(const GaussSine&, const GaussSine&) = default;
};

/// Piecewise constant: left_value for xi <= first breakpoint, then value_k on
/// (breakpoint_k, breakpoint_{k+1}].
struct StepProfile {
    double left_value = 1.0;
    std::vector<std::pair<double, double>> pieces; // (breakpoint, value to its right)

    friend bool operator==(const StepProfile&, const StepProfile&) = default;
};

/// Piecewise-linear interpolation of sorted samples.
struct Tabulated {
    std::vector<double> xi;
    std::vector<double> c;

    friend bool operator==(const Tabulated&, const Tabulated&) = default;
};

struct Constant {
    double value = 1.0;

    friend bool operator==(const Constant&, const Constant&) = default;
};

/// Depth coefficient c(xi) in physical coordinates. Immutable once built.
class CoefficientProfile {
public:
    using Representation = std::variant<GaussSine, StepProfile, Tabulated, Constant>;

    CoefficientProfile() : rep_(Constant{1.0}) {}
    CoefficientProfile(Representation rep) : rep_(std::move(rep)) { validate(); } // NOLINT

    static CoefficientProfile constant(double value) { return CoefficientProfile(Constant{value}); }

    /// 1 + 0.3 sin(pi xi / 5) + 0.6 exp(-(xi - 8)^2)
    static CoefficientProfile oscillatory_bump() {
        return CoefficientProfile(GaussSine{1.0, 0.3, std::numbers::pi / 5.0, 0.6, 8.0, 1.0});
    }

    /// Seven plateaus emulating a layered bottom.
    static CoefficientProfile layered_steps() {
        return CoefficientProfile(StepProfile{
            0.8, {{20.0, 1.5}, {22.0, 2.0}, {27.0, 1.8}, {28.0, 1.3}, {30.0, 1.6}, {32.0, 0.9}}});
    }

    const Representation& representation() const noexcept { return rep_; }

    std::string kind() const {
        return std::visit(
            [](const auto& r) -> std::string {
                using T = std::decay_t<decltype(r)>;
                if constexpr (std::is_same_v<T, GaussSine>)
                    return "gauss_sine";
                else if constexpr (std::is_same_v<T, StepProfile>)
                    return "step";
                else if constexpr (std::is_same_v<T, Tabulated>)
                    return "tabulated";
                else
                    return "constant";
            },
            rep_);
    }

    double operator()(double xi) const { return eval(xi); }

    double eval(double xi) const {
        return std::visit([xi](const auto& r) { return evaluate(r, xi); }, rep_);
    }

    /// Tabulated profiles must cover the whole mesh.
    void check_covers(const Mesh& mesh) const {
        if (const auto* t = std::get_if<Tabulated>(&rep_)) {
            const double slack = 1e-12 * std::max(1.0, mesh.length());
            if (t->xi.front() > mesh.a() + slack || t->xi.back() < mesh.b() - slack)
                throw InvalidProfile("tabulated coefficient does not span [a, b]");
        }
    }

    friend bool operator==(const CoefficientProfile&, const CoefficientProfile&) = default;

private:
    static double evaluate(const GaussSine& g, double xi) {
        const double z = (xi - g.center) / g.width;
        return g.base + g.amp_sin * std::sin(g.wavenumber * xi) + g.amp_gauss * std::exp(-z * z);
    }

    static double evaluate(const StepProfile& s, double xi) {
        // number of breakpoints strictly below xi selects the plateau
        const auto it = std::lower_bound(
            s.pieces.begin(), s.pieces.end(), xi,
            [](const std::pair<double, double>& p, double x) { return p.first < x; });
        if (it == s.pieces.begin())
            return s.left_value;
        return std::prev(it)->second;
    }

    static double evaluate(const Tabulated& t, double xi) {
        if (xi <= t.xi.front())
            return t.c.front();
        if (xi >= t.xi.back())
            return t.c.back();
        const auto it = std::upper_bound(t.xi.begin(), t.xi.end(), xi);
        const std::size_t k = static_cast<std::size_t>(it - t.xi.begin());
        const double w = (xi - t.xi[k - 1]) / (t.xi[k] - t.xi[k - 1]);
        return (1.0 - w) * t.c[k - 1] + w * t.c[k];
    }

    static double evaluate(const Constant& c, double) { return c.value; }

    void validate() const {
        std::visit(
            [](const auto& r) {
                using T = std::decay_t<decltype(r)>;
                if constexpr (std::is_same_v<T, GaussSine>) {
                    if (!(std::isfinite(r.base) && std::isfinite(r.amp_sin) &&
                          std::isfinite(r.wavenumber) && std::isfinite(r.amp_gauss) &&
                          std::isfinite(r.center) && std::isfinite(r.width)) ||
                        r.width <= 0.0)
                        throw InvalidProfile("gauss_sine parameters must be finite, width > 0");
                } else if constexpr (std::is_same_v<T, StepProfile>) {
                    if (!std::isfinite(r.left_value))
                        throw InvalidProfile("step value must be finite");
                    for (std::size_t k = 0; k < r.pieces.size(); ++k) {
                        if (!std::isfinite(r.pieces[k].first) || !std::isfinite(r.pieces[k].second))
                            throw InvalidProfile("step breakpoints and values must be finite");
                        if (k > 0 && !(r.pieces[k - 1].first < r.pieces[k].first))
                            throw InvalidProfile("step breakpoints must be strictly increasing");
                    }
                } else if constexpr (std::is_same_v<T, Tabulated>) {
                    if (r.xi.empty() || r.xi.size() != r.c.size())
                        throw InvalidProfile("tabulated profile needs matching, non-empty columns");
                    for (std::size_t k = 0; k < r.xi.size(); ++k) {
                        if (!std::isfinite(r.xi[k]) || !std::isfinite(r.c[k]))
                            throw InvalidProfile("tabulated samples must be finite");
                        if (k > 0 && !(r.xi[k - 1] < r.xi[k]))
                            throw InvalidProfile("tabulated abscissae must be strictly increasing");
                    }
                } else {
                    if (!std::isfinite(r.value))
                        throw InvalidProfile("constant coefficient must be finite");
                }
            },
            rep_);
    }

    Representation rep_;
};

/// c and c^2 at every Gauss point of a mesh. Forward, adjoint and energy all read from
/// the same cache so they see identical coefficients.
class CoefficientSamples {
public:
    CoefficientSamples(const CoefficientProfile& profile, const Mesh& mesh)
        : c_(mesh.n_elements() * GaussRule::size), c2_(c_.size()) {
        profile.check_covers(mesh);
        for (std::size_t e = 0; e < mesh.n_elements(); ++e)
            for (std::size_t q = 0; q < GaussRule::size; ++q) {
                const double v = profile.eval(mesh.gauss_point(e, q));
                c_[e * GaussRule::size + q] = v;
                c2_[e * GaussRule::size + q] = v * v;
            }
    }

    double c(std::size_t e, std::size_t q) const noexcept { return c_[e * GaussRule::size + q]; }
    double c2(std::size_t e, std::size_t q) const noexcept { return c2_[e * GaussRule::size + q]; }
    const std::vector<double>& c_values() const noexcept { return c_; }
    const std::vector<double>& c2_values() const noexcept { return c2_; }

private:
    std::vector<double> c_;
    std::vector<double> c2_;
};

inline CoefficientSamples sample_quadrature(const CoefficientProfile& profile, const Mesh& mesh) {
    return CoefficientSamples(profile, mesh);
}

} // namespace bouss
