#pragma once

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "bouss/coefficients.hpp"
#include "bouss/error.hpp"
#include "bouss/forward.hpp"
#include "bouss/io/csv.hpp"
#include "bouss/mesh.hpp"

namespace bouss::io {

using json = nlohmann::ordered_json;

struct DomainConfig {
    double a = 0.0;
    double b = 1.0;
    std::size_t n_nodes = 0;
};

/// Exactly one of dt and T is set.
struct TimeConfig {
    std::optional<double> dt;
    std::optional<double> T;
    std::size_t n_steps = 0;

    double step() const { return dt ? *dt : *T / static_cast<double>(n_steps); }
    double final_time() const { return T ? *T : *dt * static_cast<double>(n_steps); }
};

struct PhysicsConfig {
    double alpha = 0.0;
    double beta = 0.0;
    double theta = 0.5;
};

/// amplitude exp(-((xi - center) / width)^2)
struct GaussianSpec {
    double center = 0.0;
    double width = 1.0;
    double amplitude = 0.0;
};

struct InitialConfig {
    std::optional<fs::path> csv; ///< xi,N,V; replaces the analytic fields
    GaussianSpec N;
    GaussianSpec V;
};

struct InverseConfig {
    fs::path observed;
    std::optional<fs::path> truth; ///< only used to report reconstruction errors
    std::optional<fs::path> initial_guess;
    double gamma = 0.0;
    std::optional<double> lower;
    std::optional<double> upper;
    int max_iter = 100;
    double gtol = 1e-8;
    double ftol = 0.0;
    int memory = 10;
    std::vector<int> snapshot_iters = {1, 2, 3, 4};
};

struct OracleConfig {
    int levels = 3;
    std::optional<double> radius; ///< ball radius; default twice the data norm
    int max_sweeps = 200;
    double tol = 1e-12;
};

struct OutputConfig {
    fs::path directory = "bouss_out";
    std::size_t snapshot_stride = 0; ///< 0 writes only the initial and final states
};

struct RunConfig {
    DomainConfig domain;
    TimeConfig time;
    PhysicsConfig physics;
    CoefficientProfile coefficient;
    std::optional<fs::path> coefficient_csv;
    std::optional<InitialConfig> initial;
    std::optional<InverseConfig> inverse;
    OracleConfig oracle;
    OutputConfig output;
    fs::path base_dir; ///< relative input paths resolve against this

    Mesh mesh() const { return Mesh(domain.a, domain.b, domain.n_nodes); }

    SolverConfig solver() const {
        SolverConfig s;
        s.alpha = physics.alpha;
        s.beta = physics.beta;
        s.theta = physics.theta;
        s.dt = time.step();
        s.n_steps = time.n_steps;
        return s;
    }

    fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }
};

namespace detail {

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

/// Best-effort line of a dotted key path: each component is searched for as "name": after
/// the position of its parent.
inline std::size_t line_of_key(const std::string& text, const std::vector<std::string>& path) {
    std::size_t pos = 0;
    for (const auto& name : path) {
        const std::string quoted = "\"" + name + "\"";
        std::size_t found = std::string::npos;
        for (std::size_t p = text.find(quoted, pos); p != std::string::npos; p = text.find(quoted, p + 1)) {
            std::size_t q = p + quoted.size();
            while (q < text.size() && std::isspace(static_cast<unsigned char>(text[q])))
                ++q;
            if (q < text.size() && text[q] == ':') {
                found = p;
                break;
            }
        }
        if (found == std::string::npos)
            return 0;
        pos = found + quoted.size();
    }
    return line_of_offset(text, pos);
}

/// Walks one JSON object, tracking the key path for diagnostics.
class Reader {
public:
    Reader(const std::string& text, const std::string& source, const json& obj, std::vector<std::string> path)
        : text_(text), source_(source), obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object())
            fail("expected an object", path_);
    }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, v] : obj_.items())
            if (!ok.count(k)) {
                auto p = path_;
                p.push_back(k);
                fail("unknown key", p);
            }
    }

    bool has(const std::string& key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }

    Reader child(const std::string& key) const {
        if (!has(key))
            missing(key);
        return Reader(text_, source_, obj_.at(key), extend(key));
    }

    double number(const std::string& key) const {
        if (!has(key))
            missing(key);
        return number_at(obj_.at(key), extend(key));
    }

    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    std::optional<double> maybe_number(const std::string& key) const {
        return has(key) ? std::optional<double>(number(key)) : std::nullopt;
    }

    std::int64_t integer(const std::string& key) const {
        if (!has(key))
            missing(key);
        const auto& v = obj_.at(key);
        if (!v.is_number_integer())
            fail("expected an integer", extend(key));
        return v.get<std::int64_t>();
    }

    std::int64_t integer(const std::string& key, std::int64_t fallback) const {
        return has(key) ? integer(key) : fallback;
    }

    std::string string(const std::string& key) const {
        if (!has(key))
            missing(key);
        const auto& v = obj_.at(key);
        if (!v.is_string())
            fail("expected a string", extend(key));
        return v.get<std::string>();
    }

    const json& raw(const std::string& key) const { return obj_.at(key); }

    double number_at(const json& v, const std::vector<std::string>& path) const {
        if (!v.is_number())
            fail("expected a number", path);
        const double d = v.get<double>();
        if (!std::isfinite(d))
            fail("expected a finite number", path);
        return d;
    }

    std::vector<std::string> extend(const std::string& key) const {
        auto p = path_;
        p.push_back(key);
        return p;
    }

    [[noreturn]] void fail(const std::string& what, const std::vector<std::string>& path) const {
        const std::string dotted = fmt::format("{}", fmt::join(path, "."));
        const std::size_t line = line_of_key(text_, path);
        if (line > 0)
            throw ConfigError(fmt::format("{}:{}: {}: {}", source_, line, dotted.empty() ? "<root>" : dotted, what));
        throw ConfigError(fmt::format("{}: {}: {}", source_, dotted.empty() ? "<root>" : dotted, what));
    }

    [[noreturn]] void missing(const std::string& key) const { fail("required key is missing", extend(key)); }

    void require(bool ok, const std::string& key, const std::string& what) const {
        if (!ok)
            fail(what, extend(key));
    }

private:
    const std::string& text_;
    const std::string& source_;
    const json& obj_;
    std::vector<std::string> path_;
};

inline GaussianSpec read_gaussian(const Reader& field) {
    field.allow({"gaussian"});
    const auto g = field.child("gaussian");
    g.allow({"center", "width", "amplitude"});
    GaussianSpec s{g.number("center"), g.number("width", 1.0), g.number("amplitude")};
    g.require(s.width > 0.0, "width", "must be positive");
    return s;
}

inline void require_file(const Reader& r, const std::string& key, const fs::path& p) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec))
        r.fail("file not found: " + p.string(), r.extend(key));
}

} // namespace detail

/// Parses and validates a JSON run configuration. Relative paths resolve against base_dir
/// and must exist.
inline RunConfig parse_config(const std::string& text, const std::string& source = "<config>",
                              const fs::path& base_dir = fs::current_path()) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("{}:{}: malformed JSON: {}", source,
                                      detail::line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0), e.what()));
    }
    RunConfig cfg;
    cfg.base_dir = base_dir;
    const detail::Reader root(text, source, doc, {});
    root.allow({"domain", "time", "physics", "coefficient", "initial", "inverse", "oracle", "output"});

    {
        const auto d = root.child("domain");
        d.allow({"a", "b", "n_nodes"});
        cfg.domain.a = d.number("a");
        cfg.domain.b = d.number("b");
        const auto n = d.integer("n_nodes");
        d.require(n >= 3, "n_nodes", "needs at least 3 nodes");
        cfg.domain.n_nodes = static_cast<std::size_t>(n);
        d.require(cfg.domain.b > cfg.domain.a, "b", "must exceed a");
    }
    {
        const auto t = root.child("time");
        t.allow({"dt", "T", "n_steps"});
        cfg.time.dt = t.maybe_number("dt");
        cfg.time.T = t.maybe_number("T");
        if (cfg.time.dt && cfg.time.T)
            t.fail("dt and T are both set; give exactly one", t.extend("T"));
        if (!cfg.time.dt && !cfg.time.T)
            t.fail("one of dt or T is required", t.extend("dt"));
        const auto n = t.integer("n_steps");
        t.require(n >= 1, "n_steps", "must be at least 1");
        cfg.time.n_steps = static_cast<std::size_t>(n);
        if (cfg.time.dt)
            t.require(*cfg.time.dt > 0.0, "dt", "must be positive");
        else
            t.require(*cfg.time.T > 0.0, "T", "must be positive");
    }
    {
        const auto p = root.child("physics");
        p.allow({"alpha", "beta", "theta"});
        cfg.physics.alpha = p.number("alpha");
        cfg.physics.beta = p.number("beta");
        cfg.physics.theta = p.number("theta", 0.5);
        p.require(cfg.physics.alpha >= 0.0, "alpha", "must be non-negative");
        p.require(cfg.physics.beta > 0.0, "beta", "must be positive");
        p.require(cfg.physics.theta > 0.0 && cfg.physics.theta < 1.0, "theta", "must lie in (0, 1)");
    }
    {
        const auto c = root.child("coefficient");
        const auto kind = c.string("kind");
        try {
            if (kind == "constant") {
                c.allow({"kind", "value"});
                cfg.coefficient = CoefficientProfile::constant(c.number("value"));
            } else if (kind == "gauss_sine") {
                c.allow({"kind", "base", "amp_sin", "wavenumber", "amp_gauss", "center", "width"});
                cfg.coefficient = CoefficientProfile(GaussSine{c.number("base"), c.number("amp_sin"),
                                                               c.number("wavenumber"), c.number("amp_gauss"),
                                                               c.number("center"), c.number("width")});
            } else if (kind == "step") {
                c.allow({"kind", "left_value", "pieces"});
                StepProfile s;
                s.left_value = c.number("left_value");
                if (!c.has("pieces") || !c.raw("pieces").is_array())
                    c.fail("expected an array of [breakpoint, value] pairs", c.extend("pieces"));
                for (const auto& piece : c.raw("pieces")) {
                    if (!piece.is_array() || piece.size() != 2)
                        c.fail("each piece must be [breakpoint, value]", c.extend("pieces"));
                    s.pieces.emplace_back(c.number_at(piece[0], c.extend("pieces")),
                                          c.number_at(piece[1], c.extend("pieces")));
                }
                cfg.coefficient = CoefficientProfile(std::move(s));
            } else if (kind == "tabulated") {
                c.allow({"kind", "csv"});
                const fs::path p = c.string("csv");
                detail::require_file(c, "csv", cfg.resolve(p));
                const auto table = read_csv(cfg.resolve(p));
                if (table.header.size() != 2)
                    c.fail("tabulated coefficient file must have two columns", c.extend("csv"));
                Tabulated t;
                for (const auto& row : table.rows) {
                    t.xi.push_back(row[0]);
                    t.c.push_back(row[1]);
                }
                cfg.coefficient = CoefficientProfile(std::move(t));
                cfg.coefficient_csv = p;
            } else {
                c.fail("unknown kind '" + kind + "' (constant, gauss_sine, step, tabulated)", c.extend("kind"));
            }
        } catch (const InvalidProfile& e) {
            c.fail(e.what(), c.extend("kind"));
        }
        try {
            cfg.coefficient.check_covers(cfg.mesh());
        } catch (const InvalidProfile& e) {
            c.fail(e.what(), c.extend("csv"));
        }
    }
    if (root.has("initial")) {
        const auto in = root.child("initial");
        InitialConfig ic;
        if (in.has("csv")) {
            in.allow({"csv"});
            ic.csv = in.string("csv");
            detail::require_file(in, "csv", cfg.resolve(*ic.csv));
        } else {
            in.allow({"N", "V"});
            ic.N = detail::read_gaussian(in.child("N"));
            ic.V = detail::read_gaussian(in.child("V"));
        }
        cfg.initial = ic;
    }
    if (root.has("inverse")) {
        const auto v = root.child("inverse");
        v.allow({"observed", "truth", "initial_guess", "gamma", "lower", "upper", "max_iter", "gtol", "ftol",
                 "memory", "snapshot_iters"});
        InverseConfig ic;
        ic.observed = v.string("observed");
        detail::require_file(v, "observed", cfg.resolve(ic.observed));
        if (v.has("truth")) {
            ic.truth = v.string("truth");
            detail::require_file(v, "truth", cfg.resolve(*ic.truth));
        }
        if (v.has("initial_guess")) {
            ic.initial_guess = v.string("initial_guess");
            detail::require_file(v, "initial_guess", cfg.resolve(*ic.initial_guess));
        }
        ic.gamma = v.number("gamma", 0.0);
        v.require(ic.gamma >= 0.0, "gamma", "must be non-negative");
        ic.lower = v.maybe_number("lower");
        ic.upper = v.maybe_number("upper");
        if (ic.lower && ic.upper)
            v.require(*ic.lower <= *ic.upper, "lower", "must not exceed upper");
        ic.max_iter = static_cast<int>(v.integer("max_iter", 100));
        v.require(ic.max_iter >= 0, "max_iter", "must be non-negative");
        ic.gtol = v.number("gtol", 1e-8);
        ic.ftol = v.number("ftol", 0.0);
        v.require(ic.gtol >= 0.0, "gtol", "must be non-negative");
        v.require(ic.ftol >= 0.0, "ftol", "must be non-negative");
        ic.memory = static_cast<int>(v.integer("memory", 10));
        v.require(ic.memory >= 1, "memory", "must be at least 1");
        if (v.has("snapshot_iters")) {
            const auto& arr = v.raw("snapshot_iters");
            if (!arr.is_array())
                v.fail("expected an array of iteration indices", v.extend("snapshot_iters"));
            ic.snapshot_iters.clear();
            for (const auto& k : arr) {
                if (!k.is_number_integer() || k.get<int>() < 0)
                    v.fail("iteration indices must be non-negative integers", v.extend("snapshot_iters"));
                ic.snapshot_iters.push_back(k.get<int>());
            }
        }
        cfg.inverse = ic;
    }
    if (!cfg.initial && !cfg.inverse)
        root.missing("initial");
    if (root.has("oracle")) {
        const auto o = root.child("oracle");
        o.allow({"levels", "radius", "max_sweeps", "tol"});
        cfg.oracle.levels = static_cast<int>(o.integer("levels", 3));
        o.require(cfg.oracle.levels >= 2, "levels", "need at least two refinement levels");
        cfg.oracle.radius = o.maybe_number("radius");
        if (cfg.oracle.radius)
            o.require(*cfg.oracle.radius > 0.0, "radius", "must be positive");
        cfg.oracle.max_sweeps = static_cast<int>(o.integer("max_sweeps", 200));
        o.require(cfg.oracle.max_sweeps >= 1, "max_sweeps", "must be at least 1");
        cfg.oracle.tol = o.number("tol", 1e-12);
        o.require(cfg.oracle.tol > 0.0, "tol", "must be positive");
    }
    if (root.has("output")) {
        const auto o = root.child("output");
        o.allow({"directory", "snapshot_stride"});
        if (o.has("directory"))
            cfg.output.directory = o.string("directory");
        const auto stride = o.integer("snapshot_stride", 0);
        o.require(stride >= 0, "snapshot_stride", "must be non-negative");
        cfg.output.snapshot_stride = static_cast<std::size_t>(stride);
    }
    return cfg;
}

inline RunConfig load_config(const fs::path& path) {
    return parse_config(read_text(path), path.string(), fs::absolute(path).parent_path());
}

/// Normalized form with every default filled in. Parsing it again gives the same config.
inline json to_json(const RunConfig& cfg) {
    json j;
    j["domain"] = {{"a", cfg.domain.a}, {"b", cfg.domain.b}, {"n_nodes", cfg.domain.n_nodes}};
    json t;
    if (cfg.time.dt)
        t["dt"] = *cfg.time.dt;
    else
        t["T"] = *cfg.time.T;
    t["n_steps"] = cfg.time.n_steps;
    j["time"] = t;
    j["physics"] = {{"alpha", cfg.physics.alpha}, {"beta", cfg.physics.beta}, {"theta", cfg.physics.theta}};

    json c;
    c["kind"] = cfg.coefficient.kind();
    std::visit(
        [&](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, GaussSine>) {
                c["base"] = r.base;
                c["amp_sin"] = r.amp_sin;
                c["wavenumber"] = r.wavenumber;
                c["amp_gauss"] = r.amp_gauss;
                c["center"] = r.center;
                c["width"] = r.width;
            } else if constexpr (std::is_same_v<T, StepProfile>) {
                c["left_value"] = r.left_value;
                c["pieces"] = json::array();
                for (const auto& [x, v] : r.pieces)
                    c["pieces"].push_back({x, v});
            } else if constexpr (std::is_same_v<T, Tabulated>) {
                c["csv"] = cfg.coefficient_csv ? cfg.coefficient_csv->generic_string() : std::string();
            } else {
                c["value"] = r.value;
            }
        },
        cfg.coefficient.representation());
    j["coefficient"] = c;

    auto gaussian = [](const GaussianSpec& g) {
        return json{{"gaussian", {{"center", g.center}, {"width", g.width}, {"amplitude", g.amplitude}}}};
    };
    if (cfg.initial) {
        if (cfg.initial->csv)
            j["initial"] = {{"csv", cfg.initial->csv->generic_string()}};
        else
            j["initial"] = {{"N", gaussian(cfg.initial->N)}, {"V", gaussian(cfg.initial->V)}};
    }
    if (cfg.inverse) {
        const auto& v = *cfg.inverse;
        json iv;
        iv["observed"] = v.observed.generic_string();
        if (v.truth)
            iv["truth"] = v.truth->generic_string();
        if (v.initial_guess)
            iv["initial_guess"] = v.initial_guess->generic_string();
        iv["gamma"] = v.gamma;
        if (v.lower)
            iv["lower"] = *v.lower;
        if (v.upper)
            iv["upper"] = *v.upper;
        iv["max_iter"] = v.max_iter;
        iv["gtol"] = v.gtol;
        iv["ftol"] = v.ftol;
        iv["memory"] = v.memory;
        iv["snapshot_iters"] = v.snapshot_iters;
        j["inverse"] = iv;
    }
    json o{{"levels", cfg.oracle.levels}};
    if (cfg.oracle.radius)
        o["radius"] = *cfg.oracle.radius;
    o["max_sweeps"] = cfg.oracle.max_sweeps;
    o["tol"] = cfg.oracle.tol;
    j["oracle"] = o;
    j["output"] = {{"directory", cfg.output.directory.generic_string()},
                   {"snapshot_stride", cfg.output.snapshot_stride}};
    return j;
}

/// Initial fields from the config, on its mesh.
inline StatePair initial_state(const RunConfig& cfg) {
    const auto mesh = cfg.mesh();
    if (!cfg.initial)
        return StatePair::zeros(mesh.n_nodes());
    if (cfg.initial->csv)
        return read_fields(cfg.resolve(*cfg.initial->csv), mesh);
    auto field = [&](const GaussianSpec& g) {
        return sample_nodes(mesh, [&](double x) {
            const double z = (x - g.center) / g.width;
            return g.amplitude * std::exp(-z * z);
        });
    };
    StatePair s{field(cfg.initial->N), field(cfg.initial->V)};
    s.pin_boundary();
    return s;
}

} // namespace bouss::io
