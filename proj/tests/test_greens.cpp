#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "bouss/fem.hpp"
#include "bouss/forward.hpp"
#include "bouss/greens.hpp"
#include "oracles.hpp"

using namespace bouss;
using std::numbers::pi;

namespace {

StatePair bump(const Mesh& mesh, double amp) {
    const double mid = 0.5 * (mesh.a() + mesh.b()), w = mesh.length() / 6.0;
    StatePair s;
    s.N = sample_nodes(mesh, [&](double x) { return amp * std::exp(-std::pow((x - mid) / w, 2)); });
    s.V = sample_nodes(mesh, [&](double x) { return 0.5 * amp * std::exp(-std::pow((x - mid) / w, 2)); });
    return s;
}

double data_norm(const Mesh& mesh, const StatePair& s, double beta) {
    return h1_norm(mesh, s.N, beta) + h1_norm(mesh, s.V, beta);
}

} // namespace

TEST(Kernel, BoundarySymmetryJump) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.0, 60.0);
    const Kernel k(60.0, 0.1);
    EXPECT_TRUE(k.log_scaled());
    for (int i = 0; i < 200; ++i) {
        const double s = u(rng);
        EXPECT_LE(std::abs(k.g(0.0, s)), 1e-12);
        EXPECT_LE(std::abs(k.g(60.0, s)), 1e-12);
    }
    for (int i = 0; i < 50; ++i)
        for (int j = 0; j < 50; ++j) {
            const double xi = 60.0 * (i + 0.5) / 50, s = 60.0 * (j + 0.3) / 50;
            EXPECT_LE(std::abs(k.g(xi, s) - k.g(s, xi)), 1e-12);
        }
    const auto rep = kernel_identities(k, 50);
    EXPECT_LE(rep.jump_max_rel, 1e-9);
    EXPECT_NEAR(k.k(30.0, 30.0, Side::left) - k.k(30.0, 30.0, Side::right), 60.0, 60e-9);
}

TEST(Kernel, DiagonalNeedsSideAndDomainChecked) {
    const Kernel k(10.0, 0.6);
    EXPECT_THROW(k.k(3.0, 3.0), DomainError);
    EXPECT_THROW(k.g(-0.5, 3.0), DomainError);
    EXPECT_THROW(k.g(3.0, 10.5), DomainError);
    EXPECT_THROW(Kernel(100.0, 0.01), InvalidArgument); // L / ell > 700
    EXPECT_THROW(Kernel(1.0, 0.0), InvalidArgument);
}

// Log-scaled evaluation against the plain hyperbolic formula just above the switch.
TEST(Kernel, LogScalingMatchesDirectFormula) {
    const double beta = 0.6, ell = std::sqrt(beta / 6.0), L = 32.0 * ell;
    const Kernel k(L, beta);
    ASSERT_TRUE(k.log_scaled());
    for (double xi : {0.1 * L, 0.5 * L, 0.93 * L})
        for (double s : {0.05 * L, 0.47 * L, 0.8 * L}) {
            const double g = (std::cosh((L - std::abs(s - xi)) / ell) - std::cosh((L - xi - s) / ell)) /
                             (2 * ell * std::sinh(L / ell));
            EXPECT_NEAR(k.g(xi, s), g, 1e-13 * std::max(1.0, std::abs(g)));
            const double sg = xi > s ? 1.0 : -1.0;
            const double kk = 3 / beta *
                              (std::sinh((L - xi - s) / ell) + sg * std::sinh((L - std::abs(xi - s)) / ell)) /
                              std::sinh(L / ell);
            EXPECT_NEAR(k.k(xi, s), kk, 1e-12 * std::max(1.0, std::abs(kk)));
        }
}

// G(., s) solves (I - beta/6 d^2) G = delta_s; the oracle discretises that with the
// three-point Laplacian on 10001 nodes and solves the tridiagonal system.
TEST(Kernel, MatchesFiniteDifferenceGreensFunction) {
    const double L = 10.0, beta = 0.6, ell2 = beta / 6.0;
    const std::size_t n = 10001;
    const double h = L / (n - 1);
    const std::size_t m = n - 2;
    std::vector<double> lo(m, -ell2 / (h * h)), di(m, 1.0 + 2 * ell2 / (h * h)), up(m, -ell2 / (h * h)),
        rhs(m, 0.0);
    const std::size_t s_node = 5000; // s = 5
    rhs[s_node - 1] = 1.0 / h;
    const auto g = oracle::thomas(lo, di, up, rhs);
    const Kernel k(L, beta);
    EXPECT_NEAR(k.g(3.0, 5.0), g[3000 - 1], 1e-6);
    for (std::size_t i : {500u, 4000u, 7777u})
        EXPECT_NEAR(k.g(i * h, 5.0), g[i - 1], 1e-6) << "node " << i;
}

TEST(Kernel, DerivativeMatchesDifferencesOfG) {
    const Kernel k(10.0, 0.6);
    const double eps = 1e-5;
    for (double xi : {1.0, 3.0, 6.5})
        for (double s : {0.7, 5.0, 8.2}) {
            const double fd = (k.g(xi, s + eps) - k.g(xi, s - eps)) / (2 * eps);
            EXPECT_NEAR(k.k(xi, s), fd, 1e-6);
        }
    // d_2 G(xi, s) = d_1 G(s, xi) by symmetry
    const double reflected = (k.g(5.0 + eps, 3.0) - k.g(5.0 - eps, 3.0)) / (2 * eps);
    EXPECT_NEAR(k.k(3.0, 5.0), reflected, 1e-6);
    const double dk = (k.k(3.0 + eps, 5.0) - k.k(3.0 - eps, 5.0)) / (2 * eps);
    EXPECT_NEAR(k.dk_dxi(3.0, 5.0), dk, 1e-6);
}

TEST(Operators, ZeroMapsToZero) {
    const Mesh mesh(0.0, 4.0, 41);
    const Kernel k(4.0, 0.6);
    const std::vector<double> zero(41, 0.0);
    for (double v : phi1(k, zero, mesh))
        EXPECT_EQ(v, 0.0);
    for (double v : phi2(k, zero, mesh))
        EXPECT_EQ(v, 0.0);
}

// Three-point (I - beta/6 D2) applied to phi1(sin) returns sin at interior nodes, O(h^2).
TEST(Operators, Phi1InvertsTheHelmholtzOperator) {
    const double L = 10.0, beta = 0.6;
    const Kernel k(L, beta);
    double previous = 0.0;
    for (std::size_t n : {101u, 201u, 401u}) {
        const Mesh mesh(0.0, L, n);
        const auto f = sample_nodes(mesh, [&](double x) { return std::sin(pi * x / L); });
        const auto u = phi1(k, f, mesh);
        const double h = mesh.h();
        double err = 0.0;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double pu = u[i] - beta / 6 * (u[i + 1] - 2 * u[i] + u[i - 1]) / (h * h);
            err = std::max(err, std::abs(pu - f[i]));
        }
        if (previous > 0.0) {
            EXPECT_GT(previous / err, 3.5);
        }
        previous = err;
    }
    EXPECT_LT(previous, 1e-5);
}

// Integration by parts: int K phi = -int G phi' when phi vanishes at both ends.
TEST(Operators, Phi2IsPhi1OfMinusDerivative) {
    const double L = 6.0, beta = 0.6;
    const Kernel k(L, beta);
    double previous = 0.0;
    for (std::size_t n : {151u, 301u}) {
        const Mesh mesh(0.0, L, n);
        const auto f = sample_nodes(mesh, [&](double x) { return std::sin(pi * x / L) * std::exp(-x / 3); });
        const auto df = mesh.nodes();
        std::vector<double> minus_df(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = df[i];
            minus_df[i] = -(pi / L * std::cos(pi * x / L) - std::sin(pi * x / L) / 3) * std::exp(-x / 3);
        }
        const auto lhs = phi2(k, f, mesh);
        const auto rhs = phi1(k, minus_df, mesh);
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            err = std::max(err, std::abs(lhs[i] - rhs[i]));
        if (previous > 0.0) {
            EXPECT_GT(previous / err, 3.5);
        }
        previous = err;
    }
    EXPECT_LT(previous, 1e-4);
}

TEST(Operators, RandomProbeBoundedByEstimate) {
    std::mt19937 rng(13);
    const double L = 5.0, beta = 0.1;
    const Kernel k(L, beta);
    const Mesh mesh(0.0, L, 81);
    const auto est = estimate_contraction(k, mesh, CoefficientProfile::constant(1.0), 0.0, 1.0, 0.0);
    EXPECT_GT(est.C1, 0.0);
    EXPECT_GT(est.C2, 0.0);
    EXPECT_LE(est.C1, est.C1_bound);
    EXPECT_LE(est.C2, est.C2_bound);
    double worst1 = 0.0, worst2 = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto phi = with_boundary(oracle::random_vector(mesh.n_interior(), rng));
        const double den = l2_norm(mesh, phi);
        worst1 = std::max(worst1, h1_norm(mesh, phi1(k, phi, mesh), beta) / den);
        worst2 = std::max(worst2, h1_norm(mesh, phi2(k, phi, mesh), beta) / den);
    }
    RecordProperty("probe_phi1", std::to_string(worst1));
    RecordProperty("probe_phi2", std::to_string(worst2));
    EXPECT_TRUE(std::isfinite(worst1) && std::isfinite(worst2));
    EXPECT_LE(worst1, est.C1 * (1 + 1e-8));
    EXPECT_LE(worst2, est.C2 * (1 + 1e-8));
}

TEST(Contraction, HorizonsShrinkWithRadius) {
    const double L = 10.0, beta = 0.1;
    const Kernel k(L, beta);
    const Mesh mesh(0.0, L, 61);
    const auto profile = CoefficientProfile::oscillatory_bump();
    double previous = std::numeric_limits<double>::infinity();
    for (double R : {0.5, 1.0, 2.0, 5.0}) {
        const auto est = estimate_contraction(k, mesh, profile, 0.1, R, 0.3);
        EXPECT_LT(est.T2, previous);
        previous = est.T2;
        EXPECT_GT(est.T0, 0.0);
        EXPECT_EQ(est.T0, std::min(est.T1, est.T2));
        // strict inequality at T2, equality at T1
        const double lead = std::sqrt(L) / k.decay_length();
        const double bracket = est.C1 * (std::sqrt(L) + est.c_norm) + 0.1 * est.C2 * est.c2_norm * (1 + 2 * R);
        EXPECT_LT(lead * est.T2 * bracket, 1.0);
        const double u = std::sqrt(est.T1);
        const double lhs = u * (0.3 + lead * (est.C1 * (std::sqrt(L) + est.c_norm) +
                                              3 * 0.1 * est.C2 * est.c2_norm * std::sqrt(L) * u * R /
                                                  (2 * k.decay_length())) *
                                          u * R);
        EXPECT_NEAR(lhs, R, 1e-10 * R);
    }
    EXPECT_THROW(estimate_contraction(k, mesh, profile, 0.1, 0.0, 0.3), InvalidArgument);
}

TEST(Contraction, HorizonScalesWithDecayLengthOverRootLength) {
    // with alpha = 0 and c = 0 the bracket is C1 sqrt(L), so T2 * C1 * L / ell is fixed
    const auto zero_c = CoefficientProfile::constant(0.0);
    for (double beta : {0.1, 0.6}) {
        const Kernel k(4.0, beta);
        const Mesh mesh(0.0, 4.0, 41);
        const auto est = estimate_contraction(k, mesh, zero_c, 0.0, 1.0, 0.0);
        EXPECT_NEAR(est.T2 * est.C1 * 4.0 / k.decay_length(), 1.0, 1e-14);
    }
}

TEST(Picard, ZeroDataOneSweep) {
    const Mesh mesh(0.0, 10.0, 51);
    const auto r = picard_solve(Kernel(10.0, 0.1), mesh, CoefficientProfile::constant(1.0), 0.0,
                                StatePair::zeros(51), 0.1, 10);
    EXPECT_EQ(r.sweeps, 1);
    ASSERT_EQ(r.trajectory.snapshots.size(), 11u);
    for (const auto& s : r.trajectory.snapshots)
        EXPECT_EQ(s, StatePair::zeros(51));
}

TEST(Picard, LimitSatisfiesIntegralEquations) {
    const Mesh mesh(-20.0, 40.0, 121);
    const Kernel k(60.0, 0.1);
    const PicardSolver solver(k, mesh, CoefficientProfile::oscillatory_bump(), 0.1);
    StatePair init;
    init.N = sample_nodes(mesh, [](double x) { return 0.2 * std::exp(-(x - 18) * (x - 18)); });
    init.V = init.N;
    PicardOptions opt;
    opt.tol = 1e-11;
    const auto r = solver.solve(init, 0.05, 10, opt);
    EXPECT_LT(r.contraction_factor, 1.0);
    const auto again = solver.sweep(r.trajectory.snapshots, 0.005);
    EXPECT_LE(solver.distance(again, r.trajectory.snapshots), 10 * opt.tol);
    for (const auto& s : r.trajectory.snapshots)
        EXPECT_TRUE(s.satisfies_boundary());
}

TEST(Picard, AgreesWithFiniteElementsUnderRefinement) {
    const double L = 10.0, beta = 0.1, T = 0.1;
    std::vector<double> diffs;
    for (std::size_t level = 0; level < 3; ++level) {
        const std::size_t n = 40 * (1u << level) + 1, steps = 10 * (1u << level);
        const Mesh mesh(0.0, L, n);
        const auto init = bump(mesh, 0.1);
        SolverConfig cfg;
        cfg.alpha = 0.0;
        cfg.beta = beta;
        cfg.dt = T / steps;
        cfg.n_steps = steps;
        const auto fem = solve_forward(mesh, CoefficientProfile::constant(1.0), cfg, init).final_state();
        const auto pic = picard_solve(Kernel(L, beta), mesh, CoefficientProfile::constant(1.0), 0.0, init, T,
                                      steps)
                             .trajectory.final_state();
        std::vector<double> dn(n), dv(n);
        for (std::size_t i = 0; i < n; ++i) {
            dn[i] = fem.N[i] - pic.N[i];
            dv[i] = fem.V[i] - pic.V[i];
        }
        diffs.push_back(std::hypot(l2_norm(mesh, dn), l2_norm(mesh, dv)));
    }
    EXPECT_GE(diffs[0] / diffs[1], 3.0);
    EXPECT_GE(diffs[1] / diffs[2], 3.0);
}

// Short linear channel: the horizon estimate is honest in both directions.
TEST(Picard, ContractsBelowHorizonAndNotFarAbove) {
    const double L = 0.1, beta = 0.1;
    const Kernel k(L, beta);
    const Mesh mesh(0.0, L, 101);
    const auto init = bump(mesh, 0.1);
    const double d = data_norm(mesh, init, beta);
    const auto est = estimate_contraction(k, mesh, CoefficientProfile::constant(1.0), 0.0, 2 * d, d);
    const auto ok = picard_solve(k, mesh, CoefficientProfile::constant(1.0), 0.0, init, 0.5 * est.T0, 40);
    EXPECT_LT(ok.contraction_factor, 1.0);
    for (std::size_t i = 1; i < ok.sweep_differences.size(); ++i)
        EXPECT_LT(ok.sweep_differences[i], ok.sweep_differences[i - 1]);
    EXPECT_THROW(picard_solve(k, mesh, CoefficientProfile::constant(1.0), 0.0, init, 10 * est.T0, 40),
                 NonContraction);
}
