#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "bouss/inverse.hpp"
#include "oracles.hpp"

using namespace bouss;

namespace {

StatePair gaussians(const Mesh& mesh, double center, double an, double av) {
    StatePair s;
    s.N = sample_nodes(mesh, [&](double x) { return an * std::exp(-(x - center) * (x - center)); });
    s.V = sample_nodes(mesh, [&](double x) { return av * std::exp(-(x - center) * (x - center)); });
    return s;
}

SolverConfig config(double alpha, double beta, double dt, std::size_t steps) {
    SolverConfig c;
    c.alpha = alpha;
    c.beta = beta;
    c.dt = dt;
    c.n_steps = steps;
    return c;
}

InverseSpec spec_for(const Mesh& mesh, const CoefficientProfile& profile, const SolverConfig& cfg,
                     const StatePair& truth) {
    InverseSpec spec{mesh, profile, cfg, solve_forward(mesh, profile, cfg, truth).final_state(), {}, {}, 0.0, {}, {}};
    spec.snapshot_iters = {1, 2, 3, 4};
    return spec;
}

double rel_l2(const Mesh& mesh, const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        d[i] = a[i] - b[i];
    return l2_norm(mesh, d) / l2_norm(mesh, b);
}

} // namespace

TEST(Adjoint, DotProductSingleStep) {
    std::mt19937 rng(23);
    const Mesh mesh(-20.0, 40.0, 64);
    const auto cfg = config(0.1, 0.1, 0.05, 1);
    const auto truth = gaussians(mesh, 18.0, 1.0, 1.0);
    const InverseProblem problem(spec_for(mesh, CoefficientProfile::oscillatory_bump(), cfg, truth));
    const auto& sys = problem.system();
    for (int trial = 0; trial < 5; ++trial) {
        StatePair s{with_boundary(oracle::random_vector(mesh.n_interior(), rng)),
                    with_boundary(oracle::random_vector(mesh.n_interior(), rng))};
        const auto z = sys.pack(s);
        const auto z_next = sys.pack(problem.solver().step(s).state);
        const auto p = oracle::random_vector(z.size(), rng);
        const auto q = oracle::random_vector(z.size(), rng);
        const double lhs = oracle::dot(problem.tangent_step(z, z_next, p, cfg.dt, cfg.theta), q);
        const double rhs = oracle::dot(p, problem.adjoint_step(z, z_next, q, cfg.dt, cfg.theta));
        EXPECT_LE(std::abs(lhs - rhs), 1e-12 * std::max(std::abs(lhs), std::abs(rhs)));
    }
}

// Tangent against a difference quotient of the nonlinear step.
TEST(Adjoint, TangentMatchesStepDifferences) {
    std::mt19937 rng(29);
    const Mesh mesh(-20.0, 40.0, 40);
    const auto cfg = config(0.1, 0.1, 0.05, 1);
    const InverseProblem problem(
        spec_for(mesh, CoefficientProfile::layered_steps(), cfg, gaussians(mesh, 18.0, 1.0, 1.0)));
    const auto& sys = problem.system();
    const auto s = gaussians(mesh, 18.0, 1.0, 0.5);
    const auto z = sys.pack(s);
    const auto z_next = sys.pack(problem.solver().step(s).state);
    const auto p = oracle::random_vector(z.size(), rng);
    const double eps = 1e-6;
    auto shifted = [&](double sign) {
        auto zz = z;
        for (std::size_t i = 0; i < zz.size(); ++i)
            zz[i] += sign * eps * p[i];
        return sys.pack(problem.solver().step(sys.unpack(zz)).state);
    };
    const auto zp = shifted(1.0), zm = shifted(-1.0);
    const auto t = problem.tangent_step(z, z_next, p, cfg.dt, cfg.theta);
    for (std::size_t i = 0; i < t.size(); ++i)
        EXPECT_NEAR((zp[i] - zm[i]) / (2 * eps), t[i], 1e-6);
}

TEST(Adjoint, GradientMatchesCentralDifferences) {
    std::mt19937 rng(31);
    const Mesh mesh(0.0, 20.0, 64);
    const auto cfg = config(0.1, 0.1, 0.05, 20);
    const auto profile = CoefficientProfile::oscillatory_bump();
    auto spec = spec_for(mesh, profile, cfg, gaussians(mesh, 10.0, 1.0, 1.0));
    spec.tikhonov_gamma = 1e-3;
    const InverseProblem problem(spec);
    auto trial = gaussians(mesh, 9.0, 0.6, 0.3);
    for (std::size_t i = 1; i + 1 < mesh.n_nodes(); ++i) {
        trial.N[i] += 0.05 * std::sin(0.7 * i);
        trial.V[i] += 0.05 * std::cos(1.3 * i);
    }
    const auto x = problem.to_control(trial);
    std::vector<double> g;
    problem.evaluate(x, g);

    double worst = 0.0;
    for (int dir = 0; dir < 10; ++dir) {
        const auto p = oracle::random_vector(x.size(), rng);
        const double exact = oracle::dot(g, p);
        double best = std::numeric_limits<double>::infinity();
        for (double eps : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
            auto xp = x, xm = x;
            for (std::size_t i = 0; i < x.size(); ++i) {
                xp[i] += eps * p[i];
                xm[i] -= eps * p[i];
            }
            const double fd = (problem.cost(problem.from_control(xp)) - problem.cost(problem.from_control(xm))) /
                              (2 * eps);
            best = std::min(best, std::abs(fd - exact) / std::abs(exact));
        }
        worst = std::max(worst, best);
    }
    RecordProperty("worst_relative_error", std::to_string(worst));
    EXPECT_LE(worst, 1e-5);
}

// alpha = 0, c = 1: the whole forward map is a matrix the test builds densely from the
// closed-form P1 integrals, so the gradient is P^T M (P x - y).
TEST(Adjoint, LinearCaseMatchesNormalEquations) {
    std::mt19937 rng(37);
    const Mesh mesh(0.0, 8.0, 32);
    const double beta = 0.3, dt = 0.1, theta = 0.5;
    const std::size_t steps = 12;
    const auto cfg = config(0.0, beta, dt, steps);
    const auto truth = gaussians(mesh, 4.0, 0.8, -0.4);
    const InverseProblem problem(spec_for(mesh, CoefficientProfile::constant(1.0), cfg, truth));

    const std::size_t m = mesh.n_interior();
    const double h = mesh.h();
    auto A = oracle::zeros(m, m), D = oracle::zeros(m, m), M = oracle::zeros(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        A[i][i] = 2 * h / 3 + beta / 3 / h;
        M[i][i] = 2 * h / 3;
        if (i > 0) {
            A[i][i - 1] = h / 6 - beta / 6 / h;
            M[i][i - 1] = h / 6;
            D[i][i - 1] = 0.5;
        }
        if (i + 1 < m) {
            A[i][i + 1] = h / 6 - beta / 6 / h;
            M[i][i + 1] = h / 6;
            D[i][i + 1] = -0.5;
        }
    }
    auto left = oracle::zeros(2 * m, 2 * m), right = oracle::zeros(2 * m, 2 * m), mass = oracle::zeros(2 * m, 2 * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            left[i][j] = left[m + i][m + j] = A[i][j];
            left[i][m + j] = left[m + i][j] = -dt * theta * D[i][j];
            right[i][j] = right[m + i][m + j] = A[i][j];
            right[i][m + j] = right[m + i][j] = dt * (1 - theta) * D[i][j];
            mass[i][j] = mass[m + i][m + j] = M[i][j];
        }
    const auto one_step = oracle::dense_solve(left, right);
    auto P = oracle::identity(2 * m);
    for (std::size_t k = 0; k < steps; ++k)
        P = oracle::matmul(one_step, P);

    const auto x = oracle::random_vector(2 * m, rng);
    const auto y = problem.to_control(problem.spec().observed);
    auto r = oracle::matvec(P, x);
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] -= y[i];
    const auto expected = oracle::matvec(oracle::transpose(P), oracle::matvec(mass, r));
    const double expected_cost = 0.5 * oracle::dot(r, oracle::matvec(mass, r));

    std::vector<double> g;
    const double cost = problem.evaluate(x, g);
    EXPECT_NEAR(cost, expected_cost, 1e-10 * expected_cost);
    double scale = 0.0;
    for (double v : expected)
        scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < g.size(); ++i)
        EXPECT_NEAR(g[i], expected[i], 1e-8 * scale) << "control " << i;
}

TEST(Cost, ZeroAtTruthWithVanishingGradient) {
    const Mesh mesh(-20.0, 40.0, 121);
    const auto cfg = config(0.1, 0.1, 0.05, 10);
    const auto truth = gaussians(mesh, 18.0, 1.0, 1.0);
    const InverseProblem problem(spec_for(mesh, CoefficientProfile::oscillatory_bump(), cfg, truth));
    const auto e = problem.cost_and_gradient(truth);
    EXPECT_EQ(e.cost, 0.0);
    for (std::size_t i = 0; i < mesh.n_nodes(); ++i) {
        EXPECT_EQ(e.gradient.N[i], 0.0);
        EXPECT_EQ(e.gradient.V[i], 0.0);
    }
}

TEST(Cost, ZeroTrialGivesHalfObservedMassNorm) {
    const Mesh mesh(-20.0, 40.0, 121);
    const auto cfg = config(0.1, 0.1, 0.05, 10);
    const InverseProblem problem(
        spec_for(mesh, CoefficientProfile::layered_steps(), cfg, gaussians(mesh, 18.0, 1.0, 1.0)));
    const auto& obs = problem.spec().observed;
    const double expected = 0.5 * (std::pow(l2_norm(mesh, obs.N), 2) + std::pow(l2_norm(mesh, obs.V), 2));
    EXPECT_NEAR(problem.cost(StatePair::zeros(mesh.n_nodes())), expected, 1e-14 * expected);
}

TEST(Cost, QuadraticAroundTruth) {
    const Mesh mesh(-20.0, 40.0, 121);
    const auto cfg = config(0.1, 0.1, 0.05, 10);
    const auto truth = gaussians(mesh, 18.0, 1.0, 1.0);
    const InverseProblem problem(spec_for(mesh, CoefficientProfile::oscillatory_bump(), cfg, truth));
    auto perturbed = [&](double eps) {
        auto s = truth;
        for (std::size_t i = 1; i + 1 < mesh.n_nodes(); ++i)
            s.N[i] += eps * std::sin(0.3 * i);
        return problem.cost(s);
    };
    const double j1 = perturbed(1e-2), j2 = perturbed(5e-3), j3 = perturbed(2.5e-3);
    EXPECT_NEAR(j1 / j2, 4.0, 0.05);
    EXPECT_NEAR(j2 / j3, 4.0, 0.05);
}

TEST(Cost, GradientVanishesAtBoundaryNodes) {
    const Mesh mesh(-20.0, 40.0, 81);
    const auto cfg = config(0.1, 0.1, 0.05, 5);
    const InverseProblem problem(
        spec_for(mesh, CoefficientProfile::oscillatory_bump(), cfg, gaussians(mesh, 18.0, 1.0, 1.0)));
    const auto e = problem.cost_and_gradient(gaussians(mesh, 17.0, 0.5, 0.2));
    EXPECT_EQ(e.gradient.N.front(), 0.0);
    EXPECT_EQ(e.gradient.N.back(), 0.0);
    EXPECT_EQ(e.gradient.V.front(), 0.0);
    EXPECT_EQ(e.gradient.V.back(), 0.0);
}

TEST(InverseSetup, InvalidInputsRejected) {
    const Mesh mesh(0.0, 10.0, 21);
    const auto cfg = config(0.1, 0.1, 0.05, 2);
    auto spec = spec_for(mesh, CoefficientProfile::constant(1.0), cfg, gaussians(mesh, 5.0, 1.0, 1.0));
    auto bad = spec;
    bad.observed.N.front() = 1.0;
    EXPECT_THROW(InverseProblem{bad}, InvalidArgument);
    bad = spec;
    bad.observed.V.pop_back();
    EXPECT_THROW(InverseProblem{bad}, DimensionMismatch);
    bad = spec;
    bad.bounds = Bounds::uniform(38, 1.0, 0.0);
    EXPECT_THROW(InverseProblem{bad}, InvalidArgument);
    bad = spec;
    bad.bounds = Bounds::uniform(5, 0.0, 1.0);
    EXPECT_THROW(InverseProblem{bad}, DimensionMismatch);
    bad = spec;
    bad.tikhonov_gamma = -1.0;
    EXPECT_THROW(InverseProblem{bad}, InvalidArgument);
}

TEST(Reconstruct, ZeroDataConvergesImmediately) {
    const Mesh mesh(0.0, 10.0, 41);
    const auto cfg = config(0.1, 0.1, 0.05, 4);
    const auto rec = reconstruct(spec_for(mesh, CoefficientProfile::constant(1.0), cfg, StatePair::zeros(41)));
    EXPECT_TRUE(rec.trace.converged);
    EXPECT_EQ(rec.trace.iterations.size(), 1u);
    EXPECT_EQ(rec.trace.iterations[0].iter, 0);
    EXPECT_TRUE(rec.snapshots.empty());
    EXPECT_EQ(rec.recovered, StatePair::zeros(41));
}

TEST(Reconstruct, SmallTwinExperiment) {
    const Mesh mesh(0.0, 20.0, 81);
    const auto cfg = config(0.1, 0.1, 0.05, 20);
    const auto truth = gaussians(mesh, 10.0, 0.8, 0.5);
    auto spec = spec_for(mesh, CoefficientProfile::oscillatory_bump(), cfg, truth);
    const auto rec = reconstruct(spec);
    EXPECT_TRUE(rec.trace.converged) << to_string(rec.trace.reason);
    EXPECT_LE(rel_l2(mesh, rec.recovered.N, truth.N), 1e-2);
    EXPECT_LE(rel_l2(mesh, rec.recovered.V, truth.V), 1e-2);
    ASSERT_EQ(rec.snapshots.size(), 4u);
    for (int k = 0; k < 4; ++k)
        EXPECT_EQ(rec.snapshots[k].iter, k + 1);
    for (std::size_t i = 1; i < rec.trace.iterations.size(); ++i)
        EXPECT_LT(rec.trace.iterations[i].cost, rec.trace.iterations[i - 1].cost);
}

TEST(Reconstruct, BoundsAreRespected) {
    const Mesh mesh(0.0, 20.0, 41);
    const auto cfg = config(0.1, 0.1, 0.05, 10);
    auto spec = spec_for(mesh, CoefficientProfile::constant(1.0), cfg, gaussians(mesh, 10.0, 0.8, 0.5));
    spec.bounds = Bounds::uniform(2 * mesh.n_interior(), 0.0, 0.4);
    spec.optimizer.max_iter = 30;
    const auto rec = reconstruct(spec);
    bool some_active = false;
    for (std::size_t i = 1; i + 1 < mesh.n_nodes(); ++i) {
        EXPECT_GE(rec.recovered.N[i], 0.0);
        EXPECT_LE(rec.recovered.N[i], 0.4);
        EXPECT_GE(rec.recovered.V[i], 0.0);
        EXPECT_LE(rec.recovered.V[i], 0.4);
    }
    for (bool a : rec.active)
        some_active = some_active || a;
    EXPECT_TRUE(some_active);
}
