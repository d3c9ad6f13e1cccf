#pragma once

// JSON scenario configuration and dotted-path overrides.

#include <string>
#include <vector>

#include <json.hpp>

#include "cansim/scenario.hpp"

namespace cansim::config {

/// Applies `key=value` overrides addressed by dotted paths
/// (e.g. `attacks.0.amplitude=-30`). The value is read as JSON when it
/// parses, otherwise as a string. Every path must already exist.
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides);

/// Builds a config from a JSON document. Relative paths (dbc_path,
/// reference.cycle_path) are resolved against `base_dir`; the drive cycle is
/// loaded here. Throws scenario::ConfigError.
scenario::ScenarioConfig from_json(const nlohmann::json& doc, const std::string& base_dir);

nlohmann::json read_json_file(const std::string& path);

scenario::ScenarioConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Accepts 257, "257" or "0x101".
std::uint32_t parse_message_id(const nlohmann::json& value);

}  // namespace cansim::config
