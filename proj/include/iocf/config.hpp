// SPDX-License-Identifier: Apache-2.0
//
// Training configuration, named presets and the flat `key = value` config
// file format shared by the CLI.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "iocf/match.hpp"
#include "iocf/model.hpp"

namespace iocf {

struct TrainConfig {
  ModelConfig model;
  MatchWeights match;
  double lr = 1e-4;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch = 4;
  std::size_t steps = 2000;   // used when epochs == 0
  std::size_t epochs = 0;     // passes over the training split
  std::size_t crop = 256;
  bool augment = true;
  double threshold = 0.35;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;        // 0 disables validation during training
  std::size_t checkpoint_every = 0;  // 0 writes only the final checkpoint

  /// Throws ConfigError naming the offending key.
  void validate() const;
  /// Optimizer steps for a training split of `images` images.
  std::size_t total_steps(std::size_t images) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Settings reported for the full-scale model.
TrainConfig paper_train_config();
/// CPU-scale settings used for the synthetic runs.
TrainConfig desk_train_config();
/// "paper" or "desk"; ConfigError otherwise.
TrainConfig preset_config(std::string_view name);

/// Sets one key (the names used in config files). ConfigError on an unknown
/// key or a malformed value.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> setting_keys();

/// Parses `key = value` lines; `#` starts a comment and values may be
/// double-quoted. Errors carry the line number.
std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin = "config");
void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path);
/// Inverse of apply_config_file: every key, one per line.
std::string to_config_text(const TrainConfig& cfg);

nlohmann::ordered_json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const TrainConfig& cfg);

}  // namespace iocf
