#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bouss/error.hpp"

namespace bouss {

/// Per-coordinate box; use +-infinity for a free side.
struct Bounds {
    std::vector<double> lower;
    std::vector<double> upper;

    static Bounds uniform(std::size_t n, double lo, double hi) {
        return Bounds{std::vector<double>(n, lo), std::vector<double>(n, hi)};
    }
};

struct LbfgsOptions {
    int memory = 10;
    int max_iter = 100;
    double gtol = 1e-8; ///< on |P(x - g) - x|_inf, relative to its value at the start
    double ftol = 0.0;  ///< relative cost decrease per iteration; 0 disables the test
    double c1 = 1e-4;
    double c2 = 0.9;
    int max_line_search = 40;
};

enum class StopReason { gradient_tolerance, cost_tolerance, max_iterations, line_search_failed };

inline std::string to_string(StopReason r) {
    switch (r) {
    case StopReason::gradient_tolerance: return "gradient_tolerance";
    case StopReason::cost_tolerance: return "cost_tolerance";
    case StopReason::max_iterations: return "max_iterations";
    case StopReason::line_search_failed: return "line_search_failed";
    }
    return "unknown";
}

struct TraceEntry {
    int iter = 0;
    double cost = 0.0;
    double grad_inf_norm = 0.0; ///< projected gradient
    double step_norm = 0.0;     ///< |x_k - x_{k-1}|_2, 0 for the start
};

struct OptimizationTrace {
    std::vector<TraceEntry> iterations;
    bool converged = false;
    StopReason reason = StopReason::max_iterations;
    int evaluations = 0;
};

struct LbfgsResult {
    std::vector<double> x;
    double cost = 0.0;
    std::vector<double> gradient;
    std::vector<bool> active; ///< coordinate sits on a bound
    OptimizationTrace trace;
};

/// f(x) returning the cost and filling the gradient.
using Objective = std::function<double(std::span<const double>, std::vector<double>&)>;
/// Called after every accepted iteration (and once for the start, iter 0).
using IterationObserver = std::function<void(int, std::span<const double>, double)>;

namespace detail {

inline double inf_norm_of(std::span<const double> v) {
    double m = 0.0;
    for (double x : v)
        m = std::max(m, std::abs(x));
    return m;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

/// Minimizer of the cubic through (a, fa, da), (b, fb, db), or NaN if it has none.
inline double cubic_min(double a, double fa, double da, double b, double fb, double db) {
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    if (!(disc >= 0.0))
        return std::numeric_limits<double>::quiet_NaN();
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    return b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
}

} // namespace detail

class LbfgsMinimizer {
public:
    LbfgsMinimizer(Objective objective, LbfgsOptions options = {}, std::optional<Bounds> bounds = std::nullopt)
        : f_(std::move(objective)), opt_(options), bounds_(std::move(bounds)) {
        if (opt_.memory < 1 || opt_.max_iter < 0 || !(opt_.gtol >= 0.0) || !(opt_.ftol >= 0.0))
            throw InvalidArgument("invalid L-BFGS options");
        if (!(opt_.c1 > 0.0 && opt_.c1 < opt_.c2 && opt_.c2 < 1.0))
            throw InvalidArgument("line search needs 0 < c1 < c2 < 1");
    }

    LbfgsResult minimize(std::vector<double> x, const IterationObserver& observer = {}) {
        const std::size_t n = x.size();
        if (bounds_) {
            if (bounds_->lower.size() != n || bounds_->upper.size() != n)
                throw DimensionMismatch("bounds do not match the control size");
            for (std::size_t i = 0; i < n; ++i)
                if (!(bounds_->lower[i] <= bounds_->upper[i]))
                    throw InvalidArgument("lower bound above upper bound at " + std::to_string(i));
        }
        project(x);
        memory_.clear();

        LbfgsResult res;
        std::vector<double> g;
        double f = evaluate(x, g, res.trace, 0);
        double pg = projected_gradient_norm(x, g);
        const double pg0 = pg;
        res.trace.iterations.push_back({0, f, pg, 0.0});
        if (observer)
            observer(0, x, f);

        auto finish = [&](StopReason reason, bool converged) {
            res.trace.reason = reason;
            res.trace.converged = converged;
            res.x = x;
            res.cost = f;
            res.gradient = g;
            res.active.assign(n, false);
            if (bounds_)
                for (std::size_t i = 0; i < n; ++i)
                    res.active[i] = x[i] <= bounds_->lower[i] || x[i] >= bounds_->upper[i];
            return res;
        };

        if (pg == 0.0)
            return finish(StopReason::gradient_tolerance, true);

        for (int iter = 1; iter <= opt_.max_iter; ++iter) {
            const auto free = free_set(x, g);
            auto d = direction(g, free);
            if (detail::dot(g, d) >= 0.0) {
                memory_.clear();
                d = steepest(g, free);
            }
            auto step = line_search(x, f, g, d, iter == 1, res.trace, iter);
            if (!step && !memory_.empty()) {
                memory_.clear();
                d = steepest(g, free);
                step = line_search(x, f, g, d, true, res.trace, iter);
            }
            if (!step)
                return finish(StopReason::line_search_failed, false);

            std::vector<double> s(n), y(n);
            for (std::size_t i = 0; i < n; ++i) {
                s[i] = step->x[i] - x[i];
                y[i] = step->g[i] - g[i];
            }
            const double sy = detail::dot(s, y), yy = detail::dot(y, y);
            if (sy > std::numeric_limits<double>::epsilon() * yy) {
                memory_.push_back({s, y, 1.0 / sy});
                if (static_cast<int>(memory_.size()) > opt_.memory)
                    memory_.pop_front();
            }
            const double f_old = f;
            x = std::move(step->x);
            g = std::move(step->g);
            f = step->f;
            pg = projected_gradient_norm(x, g);
            res.trace.iterations.push_back({iter, f, pg, std::sqrt(detail::dot(s, s))});
            if (observer)
                observer(iter, x, f);

            if (pg <= opt_.gtol * pg0)
                return finish(StopReason::gradient_tolerance, true);
            if (opt_.ftol > 0.0 &&
                f_old - f <= opt_.ftol * std::max({std::abs(f_old), std::abs(f), 1.0}))
                return finish(StopReason::cost_tolerance, true);
        }
        return finish(StopReason::max_iterations, false);
    }

private:
    struct Pair {
        std::vector<double> s, y;
        double rho;
    };
    struct Point {
        double alpha = 0.0, f = 0.0, slope = 0.0;
        std::vector<double> x, g;
    };

    double evaluate(std::span<const double> x, std::vector<double>& g, OptimizationTrace& trace, int iter) {
        g.assign(x.size(), 0.0);
        const double f = f_(x, g);
        ++trace.evaluations;
        bool finite = std::isfinite(f);
        for (double v : g)
            finite = finite && std::isfinite(v);
        if (!finite)
            throw OptimizerError("non-finite objective or gradient at iteration " + std::to_string(iter) +
                                 " (evaluation " + std::to_string(trace.evaluations) + ")");
        if (g.size() != x.size())
            throw DimensionMismatch("objective returned a gradient of the wrong size");
        return f;
    }

    void project(std::vector<double>& x) const {
        if (!bounds_)
            return;
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] = std::clamp(x[i], bounds_->lower[i], bounds_->upper[i]);
    }

    double projected_gradient_norm(std::span<const double> x, std::span<const double> g) const {
        double m = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double t = x[i] - g[i];
            if (bounds_)
                t = std::clamp(t, bounds_->lower[i], bounds_->upper[i]);
            m = std::max(m, std::abs(t - x[i]));
        }
        return m;
    }

    /// Coordinates not pinned at a bound by a gradient that pushes outward.
    std::vector<bool> free_set(std::span<const double> x, std::span<const double> g) const {
        std::vector<bool> free(x.size(), true);
        if (bounds_)
            for (std::size_t i = 0; i < x.size(); ++i)
                if ((x[i] <= bounds_->lower[i] && g[i] > 0.0) || (x[i] >= bounds_->upper[i] && g[i] < 0.0))
                    free[i] = false;
        return free;
    }

    static std::vector<double> steepest(std::span<const double> g, const std::vector<bool>& free) {
        std::vector<double> d(g.size());
        for (std::size_t i = 0; i < g.size(); ++i)
            d[i] = free[i] ? -g[i] : 0.0;
        return d;
    }

    /// Two-loop recursion on the free coordinates.
    std::vector<double> direction(std::span<const double> g, const std::vector<bool>& free) const {
        const std::size_t n = g.size();
        auto masked = [&](std::span<const double> a, std::span<const double> b) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (free[i])
                    acc += a[i] * b[i];
            return acc;
        };
        std::vector<double> q = steepest(g, free);
        for (auto& v : q)
            v = -v;
        std::vector<double> alpha(memory_.size());
        for (std::size_t k = memory_.size(); k-- > 0;) {
            const auto& m = memory_[k];
            alpha[k] = m.rho * masked(m.s, q);
            for (std::size_t i = 0; i < n; ++i)
                if (free[i])
                    q[i] -= alpha[k] * m.y[i];
        }
        if (!memory_.empty()) {
            const auto& last = memory_.back();
            const double yy = masked(last.y, last.y);
            const double sy = masked(last.s, last.y);
            if (yy > 0.0 && sy > 0.0)
                for (auto& v : q)
                    v *= sy / yy;
        }
        for (std::size_t k = 0; k < memory_.size(); ++k) {
            const auto& m = memory_[k];
            const double beta = m.rho * masked(m.y, q);
            for (std::size_t i = 0; i < n; ++i)
                if (free[i])
                    q[i] += (alpha[k] - beta) * m.s[i];
        }
        for (std::size_t i = 0; i < n; ++i)
            q[i] = free[i] ? -q[i] : 0.0;
        return q;
    }

    /// Largest step before some coordinate leaves the box, and that coordinate.
    std::pair<double, std::size_t> max_step(std::span<const double> x, std::span<const double> d) const {
        double amax = std::numeric_limits<double>::infinity();
        std::size_t hit = x.size();
        if (!bounds_)
            return {amax, hit};
        for (std::size_t i = 0; i < x.size(); ++i) {
            double a = amax;
            if (d[i] < 0.0)
                a = (bounds_->lower[i] - x[i]) / d[i];
            else if (d[i] > 0.0)
                a = (bounds_->upper[i] - x[i]) / d[i];
            if (a < amax) {
                amax = std::max(a, 0.0);
                hit = i;
            }
        }
        return {amax, hit};
    }

    /// Strong Wolfe search on [0, alpha_max] (bracketing, then zoom with cubic steps).
    std::optional<Point> line_search(std::span<const double> x, double f0, std::span<const double> g0,
                                     std::span<const double> d, bool first, OptimizationTrace& trace, int iter) {
        const double slope0 = detail::dot(g0, d);
        if (!(slope0 < 0.0))
            return std::nullopt;
        const auto [amax, hit] = max_step(x, d);
        if (!(amax > 0.0))
            return std::nullopt;
        double alpha = first ? 1.0 / std::sqrt(detail::dot(d, d)) : 1.0;
        alpha = std::min(alpha, amax);

        int evals = 0;
        auto probe = [&](double a) {
            Point p;
            p.alpha = a;
            p.x.assign(x.begin(), x.end());
            for (std::size_t i = 0; i < p.x.size(); ++i)
                p.x[i] += a * d[i];
            if (a == amax && hit < p.x.size())
                p.x[hit] = d[hit] < 0.0 ? bounds_->lower[hit] : bounds_->upper[hit];
            project(p.x);
            p.f = evaluate(p.x, p.g, trace, iter);
            p.slope = detail::dot(p.g, d);
            ++evals;
            return p;
        };
        auto armijo = [&](const Point& p) { return p.f <= f0 + opt_.c1 * p.alpha * slope0; };
        auto curvature = [&](const Point& p) { return std::abs(p.slope) <= -opt_.c2 * slope0; };

        Point prev;
        prev.alpha = 0.0;
        prev.f = f0;
        prev.slope = slope0;
        prev.x.assign(x.begin(), x.end());
        prev.g.assign(g0.begin(), g0.end());

        auto zoom = [&](Point lo, Point hi) -> std::optional<Point> {
            while (evals < opt_.max_line_search) {
                const double width = hi.alpha - lo.alpha;
                double a = detail::cubic_min(lo.alpha, lo.f, lo.slope, hi.alpha, hi.f, hi.slope);
                const double a_lo = std::min(lo.alpha, hi.alpha), a_hi = std::max(lo.alpha, hi.alpha);
                const double margin = 0.1 * (a_hi - a_lo);
                if (!std::isfinite(a) || a < a_lo + margin || a > a_hi - margin)
                    a = lo.alpha + 0.5 * width;
                if (!(a_hi - a_lo > 1e-16 * a_hi))
                    break;
                Point p = probe(a);
                if (!armijo(p) || p.f >= lo.f) {
                    hi = std::move(p);
                } else {
                    if (curvature(p))
                        return p;
                    if (p.slope * (hi.alpha - lo.alpha) >= 0.0)
                        hi = lo;
                    lo = std::move(p);
                }
            }
            // sufficient decrease without the curvature condition is still progress
            if (lo.alpha > 0.0)
                return lo;
            return std::nullopt;
        };

        for (int i = 0; evals < opt_.max_line_search; ++i) {
            Point p = probe(alpha);
            if (!armijo(p) || (i > 0 && p.f >= prev.f))
                return zoom(std::move(prev), std::move(p));
            if (curvature(p))
                return p;
            if (p.slope >= 0.0)
                return zoom(std::move(p), std::move(prev));
            if (alpha >= amax)
                return p; // blocked by the box with Armijo satisfied
            prev = std::move(p);
            alpha = std::min(4.0 * alpha, amax);
        }
        return std::nullopt;
    }

    Objective f_;
    LbfgsOptions opt_;
    std::optional<Bounds> bounds_;
    std::deque<Pair> memory_;
};

inline LbfgsResult lbfgs_minimize(Objective objective, std::vector<double> x0,
                                  std::optional<Bounds> bounds = std::nullopt, LbfgsOptions options = {},
                                  const IterationObserver& observer = {}) {
    return LbfgsMinimizer(std::move(objective), options, std::move(bounds)).minimize(std::move(x0), observer);
}

} // namespace bouss
