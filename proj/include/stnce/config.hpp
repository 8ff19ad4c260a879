#pragma once

#include "stnce/training.hpp"

#include <json.hpp>

#include <filesystem>

namespace stnce {

/// Parses a run config. Unknown keys, wrong types and invalid values raise
/// ConfigError; the result has passed RunConfig::validate().
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

/// Human-readable description of every accepted key.
const char* run_config_schema();

}  // namespace stnce
