#pragma once

#include <string>

#include "json.hpp"

namespace acscale {

/// "0.1.0 (git describe)".
std::string version_string();

/// Hex FNV-1a of the compact dump of `config`.
std::string config_hash(const nlohmann::json& config);

/// {kind, version, git_describe, config, config_hash, seed, wall_time_s}.
nlohmann::json make_manifest(const std::string& kind, const nlohmann::json& config, double wall_time_s);

void write_json(const std::string& path, const nlohmann::json& doc);
/// Throws std::runtime_error("missing <artifact> file <path>") when absent.
nlohmann::json read_json(const std::string& path, const std::string& artifact);

} // namespace acscale
