#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "bouss/error.hpp"
#include "bouss/io/csv.hpp"

#ifndef BOUSS_VERSION
#define BOUSS_VERSION "unknown"
#endif

namespace bouss::io {

using json = nlohmann::ordered_json;

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i)
        out += fmt::format("{:02x}", md[i]);
    return out;
}

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

/// Collects a run's files in a hidden sibling directory and moves them into place only on
/// commit(), finishing with manifest.json. A stage that is never committed leaves nothing.
class OutputStage {
public:
    explicit OutputStage(fs::path directory) : final_(std::move(directory)) {
        if (final_.filename().empty())
            final_ = final_.parent_path();
        const auto parent = final_.has_parent_path() ? final_.parent_path() : fs::path(".");
        fs::create_directories(parent);
        std::random_device rd;
        staging_ = parent / fmt::format(".{}.staging-{:08x}", final_.filename().string(), rd());
        fs::create_directories(staging_);
    }

    OutputStage(const OutputStage&) = delete;
    OutputStage& operator=(const OutputStage&) = delete;

    ~OutputStage() {
        std::error_code ec;
        if (!committed_)
            fs::remove_all(staging_, ec);
    }

    const fs::path& directory() const noexcept { return final_; }

    void write(const std::string& relative, const std::string& text) {
        const auto p = staging_ / relative;
        fs::create_directories(p.parent_path());
        write_text(p, text);
        files_.push_back({relative, text.size(), sha256_hex(text)});
    }

    void write_json(const std::string& relative, const json& j) { write(relative, j.dump(2) + "\n"); }

    void timing(const std::string& phase, double seconds) { timings_[phase] = seconds; }
    void warn(const std::string& message) { warnings_.push_back(message); }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    /// Moves every staged file into the output directory and writes the manifest last.
    void commit(const std::string& command, const json& config, const json& summary) {
        json m;
        m["command"] = command;
        m["version"] = BOUSS_VERSION;
        m["config"] = config;
        m["timings_seconds"] = timings_;
        m["warnings"] = warnings_;
        m["summary"] = summary;
        m["files"] = json::array();
        for (const auto& f : files_)
            m["files"].push_back({{"path", f.path}, {"bytes", f.bytes}, {"sha256", f.sha256}});
        write_text(staging_ / "manifest.json.part", m.dump(2) + "\n");

        std::error_code ec;
        if (!fs::exists(final_, ec)) {
            fs::rename(staging_, final_);
        } else {
            for (const auto& f : files_) {
                const auto target = final_ / f.path;
                fs::create_directories(target.parent_path());
                fs::rename(staging_ / f.path, target);
            }
            fs::rename(staging_ / "manifest.json.part", final_ / "manifest.json.part");
            fs::remove_all(staging_, ec);
        }
        fs::rename(final_ / "manifest.json.part", final_ / "manifest.json");
        committed_ = true;
    }

private:
    struct FileRecord {
        std::string path;
        std::size_t bytes;
        std::string sha256;
    };

    fs::path final_;
    fs::path staging_;
    std::vector<FileRecord> files_;
    json timings_ = json::object();
    std::vector<std::string> warnings_;
    bool committed_ = false;
};

} // namespace bouss::io
