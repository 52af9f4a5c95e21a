#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bouss/energy.hpp"
#include "bouss/fem.hpp"
#include "bouss/forward.hpp"
#include "bouss/greens.hpp"
#include "bouss/inverse.hpp"
#include "bouss/io/config.hpp"
#include "bouss/io/csv.hpp"
#include "bouss/io/manifest.hpp"

namespace bouss::io {

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_solver = 3;
inline constexpr int exit_optimizer = 4;

/// Relative output directories are placed under $BOUSS_OUTPUT_ROOT when it is set.
inline fs::path output_directory(const RunConfig& cfg) {
    const auto& dir = cfg.output.directory;
    if (dir.is_absolute())
        return dir;
    if (const char* root = std::getenv("BOUSS_OUTPUT_ROOT"); root && *root)
        return fs::path(root) / dir;
    return fs::current_path() / dir;
}

struct RunResult {
    int exit_code = exit_ok;
    fs::path directory;
    json summary;
};

/// Progress goes to log when it is non-null.
template <class... Args>
void note(std::FILE* log, fmt::format_string<Args...> f, Args&&... args) {
    if (log) {
        fmt::print(log, f, std::forward<Args>(args)...);
        std::fputc('\n', log);
        std::fflush(log);
    }
}

namespace detail {

inline Table energy_table(const std::vector<EnergyRecord>& series) {
    Table t{{"step", "t", "E", "drift", "relative_drift", "min_coeff_factor", "min_c"}, {}};
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& r = series[k];
        t.rows.push_back({static_cast<double>(k), r.t, r.E, r.drift, r.relative_drift, r.min_coeff_factor, r.min_c});
    }
    return t;
}

inline json energy_summary(const std::vector<EnergyRecord>& series) {
    double min_factor = std::numeric_limits<double>::infinity();
    for (const auto& r : series)
        min_factor = std::min(min_factor, r.min_coeff_factor);
    return {{"E0", series.front().E},
            {"E_final", series.back().E},
            {"final_relative_drift", series.back().relative_drift},
            {"max_relative_drift", max_relative_drift(series)},
            {"min_coeff_factor", min_factor},
            {"min_c", series.front().min_c}};
}

/// Marches the configured problem, recording energy and Newton counts; snapshot(k, t, s)
/// is called for every step.
template <class Snapshot>
json march_with_diagnostics(const RunConfig& cfg, std::vector<EnergyRecord>& series, Table& newton,
                            std::FILE* log, Snapshot&& snapshot) {
    const auto mesh = cfg.mesh();
    const ForwardSolver solver(mesh, cfg.coefficient, cfg.solver());
    EnergyMonitor monitor(mesh, cfg.coefficient, cfg.physics.alpha);
    newton = Table{{"step", "t", "newton_iterations"}, {}};
    int max_its = 0;
    long total_its = 0;
    const std::size_t n_steps = cfg.time.n_steps;
    const std::size_t report = std::max<std::size_t>(1, n_steps / 10);
    solver.march(initial_state(cfg), [&](std::size_t k, double t, const StatePair& s, int its) {
        series.push_back(monitor.record(t, s));
        if (k > 0) {
            newton.rows.push_back({static_cast<double>(k), t, static_cast<double>(its)});
            max_its = std::max(max_its, its);
            total_its += its;
            if (k % report == 0 || k == n_steps)
                note(log, "step {}/{}  t = {:.4f}  newton {}  E drift {:.3e}", k, n_steps, t, its,
                     series.back().relative_drift);
        }
        snapshot(k, t, s);
    });
    return {{"n_steps", n_steps},
            {"final_time", cfg.time.final_time()},
            {"max_newton_iterations", max_its},
            {"mean_newton_iterations", static_cast<double>(total_its) / static_cast<double>(n_steps)}};
}

inline double combined_l2(const Mesh& mesh, const StatePair& a, const StatePair& b) {
    std::vector<double> dn(a.N.size()), dv(a.V.size());
    for (std::size_t i = 0; i < dn.size(); ++i) {
        dn[i] = a.N[i] - b.N[i];
        dv[i] = a.V[i] - b.V[i];
    }
    return std::hypot(l2_norm(mesh, dn), l2_norm(mesh, dv));
}

inline double relative_l2(const Mesh& mesh, std::span<const double> x, std::span<const double> ref) {
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = x[i] - ref[i];
    const double r = l2_norm(mesh, ref);
    return r > 0.0 ? l2_norm(mesh, d) / r : l2_norm(mesh, d);
}

inline Table coefficient_table(const RunConfig& cfg) {
    const auto mesh = cfg.mesh();
    Table t{{"xi", "c"}, {}};
    for (std::size_t i = 0; i < mesh.n_nodes(); ++i)
        t.rows.push_back({mesh.node(i), cfg.coefficient(mesh.node(i))});
    return t;
}

} // namespace detail

/// Snapshots every snapshot_stride steps (plus the first and last), final.csv, energy and
/// Newton series, and the sampled coefficient.
inline RunResult run_forward(const RunConfig& cfg, std::FILE* log = nullptr) {
    RunResult out;
    out.directory = output_directory(cfg);
    OutputStage stage(out.directory);
    const auto mesh = cfg.mesh();
    const std::size_t stride = cfg.output.snapshot_stride;
    const std::size_t n_steps = cfg.time.n_steps;

    Stopwatch clock;
    std::vector<EnergyRecord> series;
    Table newton;
    StatePair final_state;
    json steps = detail::march_with_diagnostics(cfg, series, newton, log, [&](std::size_t k, double, const StatePair& s) {
        if (k == 0 || k == n_steps || (stride > 0 && k % stride == 0))
            stage.write(fmt::format("snapshots/step_{:06d}.csv", k), fields_csv(mesh, s));
        if (k == n_steps)
            final_state = s;
    });
    stage.timing("solve", clock.seconds());

    Stopwatch write_clock;
    stage.write("final.csv", fields_csv(mesh, final_state));
    stage.write("energy.csv", to_csv(detail::energy_table(series)));
    stage.write("newton.csv", to_csv(newton));
    stage.write("coefficient.csv", to_csv(detail::coefficient_table(cfg)));
    out.summary = steps;
    out.summary["energy"] = detail::energy_summary(series);
    if (out.summary["energy"]["min_coeff_factor"].get<double>() <= 0.0)
        stage.warn("1 + alpha c^2 N became non-positive; the energy is not a norm for this run");
    stage.timing("write", write_clock.seconds());
    stage.write_json("summary.json", out.summary);
    stage.commit("forward", to_json(cfg), out.summary);
    return out;
}

/// Energy series only.
inline RunResult run_energy(const RunConfig& cfg, std::FILE* log = nullptr) {
    RunResult out;
    out.directory = output_directory(cfg);
    OutputStage stage(out.directory);
    Stopwatch clock;
    std::vector<EnergyRecord> series;
    Table newton;
    out.summary = detail::march_with_diagnostics(cfg, series, newton, log, [](std::size_t, double, const StatePair&) {});
    stage.timing("solve", clock.seconds());
    out.summary["energy"] = detail::energy_summary(series);
    note(log, "relative energy drift at T: {:.3e}", series.back().relative_drift);
    stage.write("energy.csv", to_csv(detail::energy_table(series)));
    stage.write_json("summary.json", out.summary);
    stage.commit("energy", to_json(cfg), out.summary);
    return out;
}

/// Kernel identities, contraction horizon, and the finite-element vs Picard refinement study.
inline RunResult run_oracle(const RunConfig& cfg, std::FILE* log = nullptr) {
    if (!cfg.initial || cfg.initial->csv)
        throw ConfigError("oracle needs analytic initial data so every refinement level can sample it");
    RunResult out;
    out.directory = output_directory(cfg);
    OutputStage stage(out.directory);
    const double L = cfg.domain.b - cfg.domain.a;
    const Kernel kernel(L, cfg.physics.beta);

    Stopwatch clock;
    const auto ids = kernel_identities(kernel, 50);
    const double jump = 6.0 / cfg.physics.beta;
    json kernel_report{{"points", ids.points},
                       {"length", L},
                       {"beta", cfg.physics.beta},
                       {"expected_jump", jump},
                       {"boundary_max", ids.boundary_max},
                       {"symmetry_max", ids.symmetry_max},
                       {"jump_max_relative_error", ids.jump_max_rel}};
    stage.write_json("kernel_identities.json", kernel_report);
    stage.timing("kernel", clock.seconds());
    note(log, "kernel: boundary {:.2e}  symmetry {:.2e}  jump error vs {} {:.2e}", ids.boundary_max,
         ids.symmetry_max, jump, ids.jump_max_rel);

    clock = Stopwatch();
    const auto mesh = cfg.mesh();
    const auto init = initial_state(cfg);
    const double data_norm = h1_norm(mesh, init.N, cfg.physics.beta) + h1_norm(mesh, init.V, cfg.physics.beta);
    const double radius = cfg.oracle.radius ? *cfg.oracle.radius : (data_norm > 0.0 ? 2.0 * data_norm : 1.0);
    const auto est = estimate_contraction(kernel, mesh, cfg.coefficient, cfg.physics.alpha, radius, data_norm);
    const double T = cfg.time.final_time();
    json horizon{{"C1", est.C1},       {"C2", est.C2},           {"C1_bound", est.C1_bound},
                 {"C2_bound", est.C2_bound}, {"radius", est.R},   {"data_norm", est.data_norm},
                 {"c_norm", est.c_norm}, {"c2_norm", est.c2_norm}, {"T1", est.T1},
                 {"T2", est.T2},       {"T0", est.T0},           {"growth_constant", est.growth_constant},
                 {"final_time", T}};
    stage.write_json("contraction.json", horizon);
    stage.timing("contraction", clock.seconds());
    note(log, "contraction horizon T0 = {:.4e} (T1 {:.4e}, T2 {:.4e}), run to T = {}", est.T0, est.T1, est.T2, T);
    if (T > est.T0)
        stage.warn(fmt::format("final time {} exceeds the estimated contraction horizon {:.6e}", T, est.T0));

    clock = Stopwatch();
    Table study{{"level", "n_nodes", "n_steps", "h", "dt", "l2_difference", "observed_order", "picard_sweeps"}, {}};
    std::vector<double> diffs;
    PicardOptions popts;
    popts.max_sweeps = cfg.oracle.max_sweeps;
    popts.tol = cfg.oracle.tol;
    for (int level = 0; level < cfg.oracle.levels; ++level) {
        RunConfig lc = cfg;
        const std::size_t factor = std::size_t{1} << level;
        lc.domain.n_nodes = (cfg.domain.n_nodes - 1) * factor + 1;
        lc.time.n_steps = cfg.time.n_steps * factor;
        if (lc.time.dt)
            lc.time.dt = *cfg.time.dt / static_cast<double>(factor);
        const auto lmesh = lc.mesh();
        const auto data = initial_state(lc);
        const auto fem = solve_forward(lmesh, lc.coefficient, lc.solver(), data);
        const auto pic = picard_solve(kernel, lmesh, lc.coefficient, lc.physics.alpha, data, lc.time.final_time(),
                                      lc.time.n_steps, popts);
        const double d = detail::combined_l2(lmesh, fem.final_state(), pic.trajectory.final_state());
        const double order = diffs.empty() ? std::nan("") : std::log2(diffs.back() / d);
        diffs.push_back(d);
        study.rows.push_back({static_cast<double>(level), static_cast<double>(lmesh.n_nodes()),
                              static_cast<double>(lc.time.n_steps), lmesh.h(), lc.time.step(), d, order,
                              static_cast<double>(pic.sweeps)});
        note(log, "level {}: {} nodes, {} steps, |FEM - Picard| = {:.3e}{}", level, lmesh.n_nodes(),
             lc.time.n_steps, d, std::isnan(order) ? std::string() : fmt::format(", order {:.2f}", order));
    }
    stage.write("refinement.csv", to_csv(study));
    stage.timing("refinement", clock.seconds());

    std::vector<double> orders;
    for (std::size_t k = 1; k < diffs.size(); ++k)
        orders.push_back(std::log2(diffs[k - 1] / diffs[k]));
    out.summary = {{"kernel", kernel_report},
                   {"T0", est.T0},
                   {"final_time", T},
                   {"differences", diffs},
                   {"observed_orders", orders},
                   {"finest_difference", diffs.back()}};
    stage.write_json("summary.json", out.summary);
    stage.commit("oracle", to_json(cfg), out.summary);
    return out;
}

/// L-BFGS reconstruction of the initial state from the observed final state. Outputs are
/// written even when the optimizer stops early; the exit code then reports the failure.
inline RunResult run_inverse(const RunConfig& cfg, std::FILE* log = nullptr) {
    if (!cfg.inverse)
        throw ConfigError("inverse run needs an 'inverse' section");
    const auto& ic = *cfg.inverse;
    const auto mesh = cfg.mesh();
    const auto observed = read_fields(cfg.resolve(ic.observed), mesh);
    std::optional<StatePair> truth;
    if (ic.truth)
        truth = read_fields(cfg.resolve(*ic.truth), mesh);

    InverseSpec spec{mesh, cfg.coefficient, cfg.solver(), observed, {}, {}, ic.gamma, {}, ic.snapshot_iters};
    if (ic.initial_guess)
        spec.initial_guess = read_fields(cfg.resolve(*ic.initial_guess), mesh);
    if (ic.lower || ic.upper) {
        const double inf = std::numeric_limits<double>::infinity();
        spec.bounds = Bounds::uniform(2 * mesh.n_interior(), ic.lower.value_or(-inf), ic.upper.value_or(inf));
    }
    spec.optimizer.max_iter = ic.max_iter;
    spec.optimizer.gtol = ic.gtol;
    spec.optimizer.ftol = ic.ftol;
    spec.optimizer.memory = ic.memory;

    RunResult out;
    out.directory = output_directory(cfg);
    OutputStage stage(out.directory);
    Stopwatch clock;
    const auto rec = reconstruct(spec, [&](const TraceEntry& e) { note(log, "iter {:3d}  cost {:.6e}", e.iter, e.cost); });
    stage.timing("optimize", clock.seconds());

    Table trace{{"iter", "cost", "grad_norm", "step_norm"}, {}};
    for (const auto& e : rec.trace.iterations)
        trace.rows.push_back({static_cast<double>(e.iter), e.cost, e.grad_inf_norm, e.step_norm});
    stage.write("trace.csv", to_csv(trace));
    for (const auto& snap : rec.snapshots) {
        stage.write(fmt::format("iterates/N_iter_{:03d}.csv", snap.iter), field_csv(mesh, snap.state.N, "N"));
        stage.write(fmt::format("iterates/V_iter_{:03d}.csv", snap.iter), field_csv(mesh, snap.state.V, "V"));
    }
    stage.write("recovered.csv", fields_csv(mesh, rec.recovered));

    out.summary = {{"stop_reason", to_string(rec.trace.reason)},
                   {"converged", rec.trace.converged},
                   {"iterations", rec.trace.iterations.back().iter},
                   {"initial_cost", rec.trace.iterations.front().cost},
                   {"final_cost", rec.trace.iterations.back().cost},
                   {"evaluations", rec.trace.evaluations},
                   {"snapshot_iters", [&] {
                        std::vector<int> its;
                        for (const auto& s : rec.snapshots)
                            its.push_back(s.iter);
                        return its;
                    }()}};
    if (truth) {
        out.summary["relative_error_N"] = detail::relative_l2(mesh, rec.recovered.N, truth->N);
        out.summary["relative_error_V"] = detail::relative_l2(mesh, rec.recovered.V, truth->V);
    }
    if (!rec.trace.converged)
        stage.warn("optimizer stopped without converging: " + to_string(rec.trace.reason));
    note(log, "stopped after {} iterations: {}", rec.trace.iterations.back().iter, to_string(rec.trace.reason));
    stage.write_json("summary.json", out.summary);
    stage.commit("inverse", to_json(cfg), out.summary);
    out.exit_code = rec.trace.converged ? exit_ok : exit_optimizer;
    return out;
}

} // namespace bouss::io
