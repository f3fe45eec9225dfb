#pragma once

// Run manifests, staged output directories and input hashing for the CLI.

#include <openssl/evp.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flameguide/common.hpp"

namespace flameguide::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 2, kValidation = 3, kIo = 4 };

inline std::string sha256_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for hashing: " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256 init failed");
    std::vector<char> buf(1 << 16);
    while (is) {
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (is.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(is.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

/// Shortest decimal string that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

struct ManifestInput {
    std::string role;  // flag name the path was passed through
    std::string path;
    std::string sha256;

    friend bool operator==(const ManifestInput&, const ManifestInput&) = default;
};

/// Everything needed to reproduce a command's outputs. Output locations and
/// --jobs are deliberately absent: neither affects output bytes.
struct RunManifest {
    std::string tool = "flameguide";
    std::string version;
    std::string command;
    std::vector<ManifestInput> inputs;
    std::map<std::string, std::string> config;  // flag name -> canonical value

    friend bool operator==(const RunManifest&, const RunManifest&) = default;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["tool"] = tool;
        j["version"] = version;
        j["command"] = command;
        j["inputs"] = nlohmann::ordered_json::array();
        for (const auto& in : inputs) j["inputs"].push_back({{"role", in.role}, {"path", in.path}, {"sha256", in.sha256}});
        j["config"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : config) j["config"][k] = v;
        return j;
    }

    static RunManifest from_json(const nlohmann::json& j) {
        RunManifest m;
        try {
            m.tool = j.at("tool").get<std::string>();
            m.version = j.at("version").get<std::string>();
            m.command = j.at("command").get<std::string>();
            for (const auto& in : j.at("inputs"))
                m.inputs.push_back({in.at("role").get<std::string>(), in.at("path").get<std::string>(),
                                    in.at("sha256").get<std::string>()});
            for (const auto& [k, v] : j.at("config").items()) m.config[k] = v.get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("malformed manifest: ") + e.what());
        }
        return m;
    }

    void add_input(const std::string& role, const fs::path& path) {
        inputs.push_back({role, path.generic_string(), sha256_file(path)});
    }

    void save(const fs::path& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("cannot write manifest: " + path.string());
        os << to_json().dump(2) << '\n';
        if (!os) throw IoError("cannot write manifest: " + path.string());
    }

    static RunManifest load(const fs::path& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw IoError("cannot open manifest: " + path.string());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(is);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError(path.string() + ": " + e.what());
        }
        return from_json(j);
    }
};

/// Output written into a sibling staging path, moved into place on commit
/// and deleted otherwise.
class StagedOutput {
public:
    enum class Kind { directory, file };

    StagedOutput(fs::path final_path, Kind kind, bool force) : final_(std::move(final_path)), kind_(kind) {
        if (final_.has_parent_path()) fs::create_directories(final_.parent_path());
        if (fs::exists(final_)) {
            const bool empty_dir = fs::is_directory(final_) && fs::is_empty(final_);
            if (!force && !empty_dir)
                throw UsageError("output " + final_.string() + " already exists (pass --force to replace it)");
        }
        std::random_device rd;
        staging_ = final_;
        staging_ += ".partial-" + std::to_string(rd());
        if (kind_ == Kind::directory) fs::create_directories(staging_);
    }

    StagedOutput(const StagedOutput&) = delete;
    StagedOutput& operator=(const StagedOutput&) = delete;

    ~StagedOutput() {
        if (!committed_) {
            std::error_code ec;
            fs::remove_all(staging_, ec);
        }
    }

    /// Where to write: the staging directory, or the staging file path.
    const fs::path& path() const { return staging_; }
    const fs::path& final_path() const { return final_; }

    void commit() {
        if (fs::exists(final_)) fs::remove_all(final_);
        fs::rename(staging_, final_);
        committed_ = true;
    }

private:
    fs::path final_;
    fs::path staging_;
    Kind kind_;
    bool committed_ = false;
};

/// $FLAMEGUIDE_OUTPUT_ROOT/<command>, or ./flameguide-out/<command>.
inline fs::path default_output(const std::string& command, const std::string& leaf = "") {
    const char* root = std::getenv("FLAMEGUIDE_OUTPUT_ROOT");
    fs::path p = (root && *root) ? fs::path(root) : fs::path("flameguide-out");
    p /= command;
    if (!leaf.empty()) p /= leaf;
    return p;
}

}  // namespace flameguide::cli
