#pragma once

// Run configuration: INI-style sections (data, encoder, ode, decoder, train)
// with `key = value` lines. Every key has a default; unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lsds/graph_data.hpp"
#include "lsds/trainer.hpp"

namespace lsds {

struct RunConfig {
  std::filesystem::path dataset;  // empty: generate synthetic data from `synth`
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
};

struct ConfigKeyInfo {
  std::string key;  // "section.name"
  std::string default_value;
  std::string doc;
};

// All keys with their defaults, in file order.
std::vector<ConfigKeyInfo> config_keys();

// Throws ConfigError for unknown keys or unparsable values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

// Assignments in file order, "section.key" -> value. Throws ConfigError with
// the source name and line on malformed input.
std::vector<std::pair<std::string, std::string>> parse_ini(const std::string& text, const std::string& source);

// Full configuration as INI text; parsing it reproduces the configuration.
std::string to_ini(const RunConfig& config);

// defaults < LSDS_SEED (only when nothing else sets train.seed) < file <
// command-line overrides ("section.key=value") < --seed.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed,
                         const char* env_seed);

}  // namespace lsds
