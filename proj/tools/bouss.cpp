#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "bouss/io/runners.hpp"

using namespace bouss;

namespace {

struct Options {
    std::string config;
    std::string output;
    bool quiet = false;
};

int dispatch(const std::string& command, const Options& opts) {
    io::RunConfig cfg;
    try {
        cfg = io::load_config(opts.config);
        if (!opts.output.empty())
            cfg.output.directory = opts.output;
    } catch (const Error& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return io::exit_config;
    }
    std::FILE* log = opts.quiet ? nullptr : stderr;
    try {
        io::RunResult r;
        if (command == "forward")
            r = io::run_forward(cfg, log);
        else if (command == "energy")
            r = io::run_energy(cfg, log);
        else if (command == "oracle")
            r = io::run_oracle(cfg, log);
        else
            r = io::run_inverse(cfg, log);
        io::note(log, "wrote {}", r.directory.string());
        return r.exit_code;
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return io::exit_config;
    } catch (const InvalidArgument& e) {
        fmt::print(stderr, "invalid input: {}\n", e.what());
        return io::exit_config;
    } catch (const SolverError& e) {
        fmt::print(stderr, "solver failure: {}\n", e.what());
        return io::exit_solver;
    } catch (const OptimizerError& e) {
        fmt::print(stderr, "optimizer failure: {}\n", e.what());
        return io::exit_optimizer;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variable-coefficient Boussinesq solver: forward runs, reconstructions, oracle checks"};
    app.set_version_flag("--version", std::string(BOUSS_VERSION));
    app.require_subcommand(1);

    Options opts;
    const std::pair<const char*, const char*> commands[] = {
        {"forward", "march the configured problem and write snapshots, energy and Newton series"},
        {"inverse", "reconstruct the initial state from an observed final state"},
        {"oracle", "kernel identities, contraction horizon and FEM vs Picard refinement study"},
        {"energy", "energy series of the configured forward run"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("config", opts.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--output", opts.output, "output directory (overrides output.directory)");
        sub->add_flag("-q,--quiet", opts.quiet, "no progress on stderr");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : io::exit_config;
    }
    try {
        return dispatch(app.get_subcommands().front()->get_name(), opts);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
}
