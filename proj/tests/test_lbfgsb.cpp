#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "bouss/lbfgsb.hpp"
#include "oracles.hpp"

using namespace bouss;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double rosenbrock(std::span<const double> x, std::vector<double>& g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
}

void expect_monotone(const OptimizationTrace& trace) {
    for (std::size_t i = 1; i < trace.iterations.size(); ++i)
        EXPECT_LT(trace.iterations[i].cost, trace.iterations[i - 1].cost) << "iteration " << i;
}

} // namespace

TEST(Lbfgs, QuadraticExactRecovery) {
    std::mt19937 rng(17);
    const std::size_t n = 10;
    auto a = oracle::zeros(n, n);
    for (auto& row : a)
        row = oracle::random_vector(n, rng);
    auto q = oracle::matmul(oracle::transpose(a), a);
    for (std::size_t i = 0; i < n; ++i)
        q[i][i] += 1.0;
    const auto b = oracle::random_vector(n, rng);
    const auto exact = oracle::dense_solve(q, b);

    auto f = [&](std::span<const double> x, std::vector<double>& g) {
        const auto qx = oracle::matvec(q, std::vector<double>(x.begin(), x.end()));
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            g[i] = qx[i] - b[i];
            v += 0.5 * x[i] * qx[i] - b[i] * x[i];
        }
        return v;
    };
    const auto res = lbfgs_minimize(f, std::vector<double>(n, 0.0));
    EXPECT_TRUE(res.trace.converged);
    EXPECT_EQ(res.trace.reason, StopReason::gradient_tolerance);
    EXPECT_LE(res.trace.iterations.back().iter, 30);
    for (std::size_t i = 0; i < n; ++i)
        EXPECT_NEAR(res.x[i], exact[i], 1e-8);
    expect_monotone(res.trace);
}

TEST(Lbfgs, Rosenbrock) {
    LbfgsOptions opt;
    opt.gtol = 1e-12;
    opt.max_iter = 200;
    const auto res = lbfgs_minimize(rosenbrock, {-1.2, 1.0}, std::nullopt, opt);
    EXPECT_TRUE(res.trace.converged);
    EXPECT_NEAR(res.x[0], 1.0, 1e-6);
    EXPECT_NEAR(res.x[1], 1.0, 1e-6);
    EXPECT_LE(detail::inf_norm_of(res.gradient), 1e-8);
    expect_monotone(res.trace);
}

TEST(Lbfgs, ActiveLowerBound) {
    // 1/2 (x + 1)^2 in the first coordinate, free quadratic in the second
    auto f = [](std::span<const double> x, std::vector<double>& g) {
        g[0] = x[0] + 1.0;
        g[1] = 2.0 * (x[1] - 3.0);
        return 0.5 * (x[0] + 1.0) * (x[0] + 1.0) + (x[1] - 3.0) * (x[1] - 3.0);
    };
    const auto res = lbfgs_minimize(f, {2.0, 0.0}, Bounds{{0.0, 0.0}, {inf, inf}});
    EXPECT_TRUE(res.trace.converged);
    EXPECT_EQ(res.x[0], 0.0);
    EXPECT_TRUE(res.active[0]);
    EXPECT_NEAR(res.x[1], 3.0, 1e-8);
    EXPECT_FALSE(res.active[1]);
    expect_monotone(res.trace);
}

TEST(Lbfgs, StartOnBoundStaysThere) {
    auto f = [](std::span<const double> x, std::vector<double>& g) {
        g[0] = x[0] + 1.0;
        return 0.5 * (x[0] + 1.0) * (x[0] + 1.0);
    };
    const auto res = lbfgs_minimize(f, {-5.0}, Bounds::uniform(1, 0.0, inf));
    EXPECT_EQ(res.x[0], 0.0);
    EXPECT_TRUE(res.active[0]);
    EXPECT_EQ(res.trace.iterations.size(), 1u); // converged at the projected start
}

TEST(Lbfgs, ZeroGradientConvergesAtIterationZero) {
    int calls = 0;
    std::vector<int> seen;
    auto f = [&](std::span<const double>, std::vector<double>& g) {
        ++calls;
        std::fill(g.begin(), g.end(), 0.0);
        return 0.0;
    };
    const auto res = lbfgs_minimize(f, std::vector<double>(4, 0.0), std::nullopt, {},
                                    [&](int it, std::span<const double>, double) { seen.push_back(it); });
    EXPECT_TRUE(res.trace.converged);
    EXPECT_EQ(res.trace.reason, StopReason::gradient_tolerance);
    EXPECT_EQ(calls, 1);
    EXPECT_EQ(seen, std::vector<int>{0});
}

TEST(Lbfgs, StopReasons) {
    LbfgsOptions opt;
    opt.max_iter = 3;
    opt.gtol = 0.0;
    const auto capped = lbfgs_minimize(rosenbrock, {-1.2, 1.0}, std::nullopt, opt);
    EXPECT_EQ(capped.trace.reason, StopReason::max_iterations);
    EXPECT_FALSE(capped.trace.converged);
    EXPECT_EQ(capped.trace.iterations.size(), 4u);

    // gradient with the wrong sign: every trial point is uphill
    auto liar = [](std::span<const double> x, std::vector<double>& g) {
        g[0] = -2.0 * x[0];
        return x[0] * x[0];
    };
    const auto failed = lbfgs_minimize(liar, {1.0});
    EXPECT_EQ(failed.trace.reason, StopReason::line_search_failed);
    EXPECT_EQ(failed.x[0], 1.0);

    LbfgsOptions loose;
    loose.ftol = 1e-3;
    loose.gtol = 0.0;
    const auto flat = lbfgs_minimize(rosenbrock, {-1.2, 1.0}, std::nullopt, loose);
    EXPECT_EQ(flat.trace.reason, StopReason::cost_tolerance);
}

TEST(Lbfgs, NonFiniteObjectiveAborts) {
    auto f = [](std::span<const double> x, std::vector<double>& g) {
        g[0] = 1.0;
        return x[0] < 0.5 ? std::nan("") : x[0];
    };
    EXPECT_THROW(lbfgs_minimize(f, {1.0}), OptimizerError);
    EXPECT_THROW(lbfgs_minimize(f, {0.0}), OptimizerError);
}

TEST(Lbfgs, RejectsBadInput) {
    EXPECT_THROW(lbfgs_minimize(rosenbrock, {0.0, 0.0}, Bounds{{1.0, 0.0}, {0.0, 1.0}}), InvalidArgument);
    EXPECT_THROW(lbfgs_minimize(rosenbrock, {0.0, 0.0}, Bounds{{0.0}, {1.0}}), DimensionMismatch);
    LbfgsOptions bad;
    bad.c1 = 0.95;
    EXPECT_THROW(lbfgs_minimize(rosenbrock, {0.0, 0.0}, std::nullopt, bad), InvalidArgument);
}

TEST(Lbfgs, BoxedRosenbrockStopsOnFace) {
    // minimum of Rosenbrock over x1 <= 0.5 lies on that face
    LbfgsOptions opt;
    opt.gtol = 1e-12;
    opt.max_iter = 200;
    const auto res = lbfgs_minimize(rosenbrock, {-1.2, 1.0}, Bounds{{-inf, -inf}, {0.5, inf}}, opt);
    EXPECT_TRUE(res.trace.converged);
    EXPECT_EQ(res.x[0], 0.5);
    EXPECT_TRUE(res.active[0]);
    EXPECT_NEAR(res.x[1], 0.25, 1e-8);
    expect_monotone(res.trace);
}
