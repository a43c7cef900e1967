#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cdcl/trainer.hpp"

namespace cdcl::config {

struct RunConfig {
  srnet::ModelConfig model;
  trainer::TrainConfig train;
};

// Flat `key = value` lines, `#` starts a comment, nested fields use dotted keys
// such as `model.n_dags`. Unknown keys and malformed values throw ConfigError.
RunConfig parse(std::string_view text, RunConfig base = {});
RunConfig load_file(const std::filesystem::path& path, RunConfig base = {});

void set(RunConfig& cfg, std::string_view key, std::string_view value);
// Accepts "key=value".
void apply_override(RunConfig& cfg, std::string_view assignment);

// Every key with its current value, in schema order.
std::vector<std::pair<std::string, std::string>> entries(const RunConfig& cfg);
std::string to_text(const RunConfig& cfg);

nlohmann::json to_json(const RunConfig& cfg);
RunConfig from_json(const nlohmann::json& j);

// Validates the model and training sections together.
void validate(const RunConfig& cfg);

}  // namespace cdcl::config
