#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bouss/error.hpp"
#include "bouss/fem.hpp"
#include "bouss/mesh.hpp"

namespace bouss::io {

namespace fs = std::filesystem;

/// 17 significant digits, enough for a lossless round trip.
inline std::string fmt_real(double v) { return fmt::format("{:.17g}", v); }

/// Numeric table with a one-line header.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline std::string to_csv(const Table& t) {
    std::string out = fmt::format("{}\n", fmt::join(t.header, ","));
    for (const auto& row : t.rows) {
        if (row.size() != t.header.size())
            throw DimensionMismatch("table row width does not match header");
        for (std::size_t j = 0; j < row.size(); ++j) {
            out += fmt_real(row[j]);
            out += j + 1 < row.size() ? ',' : '\n';
        }
    }
    return out;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text) || !out.flush())
        throw Error("cannot write " + path.string());
}

inline Table parse_csv(const std::string& text, const std::string& source) {
    Table t;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(s);
        while (std::getline(ls, cell, ','))
            cells.push_back(cell);
        if (!s.empty() && s.back() == ',')
            cells.emplace_back();
        return cells;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (t.header.empty()) {
            t.header = split(line);
            continue;
        }
        const auto cells = split(line);
        if (cells.size() != t.header.size())
            throw ConfigError(fmt::format("{}:{}: expected {} columns, found {}", source, lineno,
                                          t.header.size(), cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            // strtod rather than stod: subnormal values are data, not range errors
            char* end = nullptr;
            const double v = std::strtod(c.c_str(), &end);
            if (c.empty() || end != c.c_str() + c.size())
                throw ConfigError(fmt::format("{}:{}: '{}' is not a number", source, lineno, c));
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty())
        throw ConfigError(source + ": empty file");
    return t;
}

inline Table read_csv(const fs::path& path) { return parse_csv(read_text(path), path.string()); }

inline std::vector<double> column(const Table& t, const std::string& name, const std::string& source) {
    for (std::size_t j = 0; j < t.header.size(); ++j)
        if (t.header[j] == name) {
            std::vector<double> out;
            out.reserve(t.rows.size());
            for (const auto& r : t.rows)
                out.push_back(r[j]);
            return out;
        }
    throw ConfigError(source + ": missing column '" + name + "'");
}

/// Snapshot schema: xi,N,V with one row per node.
inline std::string fields_csv(const Mesh& mesh, const StatePair& s) {
    check_state(mesh, s);
    Table t{{"xi", "N", "V"}, {}};
    t.rows.reserve(mesh.n_nodes());
    for (std::size_t i = 0; i < mesh.n_nodes(); ++i)
        t.rows.push_back({mesh.node(i), s.N[i], s.V[i]});
    return to_csv(t);
}

/// Single field, header xi,<name>.
inline std::string field_csv(const Mesh& mesh, std::span<const double> f, const std::string& name) {
    bouss::detail::check_nodal(mesh, f);
    Table t{{"xi", name}, {}};
    for (std::size_t i = 0; i < mesh.n_nodes(); ++i)
        t.rows.push_back({mesh.node(i), f[i]});
    return to_csv(t);
}

/// Loads xi,N,V and checks the abscissae against the mesh nodes.
inline StatePair read_fields(const fs::path& path, const Mesh& mesh) {
    const auto t = read_csv(path);
    const auto src = path.string();
    const auto xi = column(t, "xi", src);
    StatePair s{column(t, "N", src), column(t, "V", src)};
    if (xi.size() != mesh.n_nodes())
        throw ConfigError(fmt::format("{}: {} rows but the mesh has {} nodes", src, xi.size(), mesh.n_nodes()));
    const double tol = 1e-9 * std::max(1.0, std::abs(mesh.a()) + std::abs(mesh.b()));
    for (std::size_t i = 0; i < xi.size(); ++i)
        if (std::abs(xi[i] - mesh.node(i)) > tol)
            throw ConfigError(fmt::format("{}: row {} has xi = {} but node {} is at {}", src, i + 1, xi[i], i,
                                          mesh.node(i)));
    return s;
}

} // namespace bouss::io
