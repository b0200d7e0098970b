#pragma once

// Run manifests: effective configuration, seeds, timings and SHA-256 of every
// output file. Needs OpenSSL (libcrypto).

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "qss/csv.hpp"

namespace qss {

inline constexpr const char* kVersion = "1.0.0";

inline std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for hashing");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw IoError("SHA-256 initialisation failed");
    }
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    char b[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(b, sizeof b, "%02x", md[i]);
        hex += b;
    }
    return hex;
}

/// Relative path -> SHA-256 for every regular file under `dir` except the manifest.
inline nlohmann::json checksum_tree(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    nlohmann::json out = nlohmann::json::object();
    for (const auto& f : files) out[fs::relative(f, dir).generic_string()] = sha256_file(f);
    return out;
}

/// Writes <dir>/manifest.json. `extra` is merged at the top level.
inline fs::path emit_manifest(const std::string& subcommand, const nlohmann::json& config, const fs::path& dir,
                              double wall_seconds, const nlohmann::json& extra = nlohmann::json::object()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    nlohmann::json m;
    m["subcommand"] = subcommand;
    m["config"] = config;
    m["version"] = kVersion;
    m["compiler"] = __VERSION__;
    m["wall_clock_seconds"] = wall_seconds;
    m["checksums"] = checksum_tree(dir);
    for (const auto& [k, v] : extra.items()) m[k] = v;
    const fs::path path = dir / "manifest.json";
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << m.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
    return path;
}

/// Reads a config file. A manifest is accepted too, in which case its
/// recorded configuration is returned.
inline nlohmann::json load_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
    if (j.is_object() && j.contains("config") && j.contains("checksums")) return j["config"];
    return j;
}

}  // namespace qss
