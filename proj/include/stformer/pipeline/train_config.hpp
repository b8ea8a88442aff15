#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "stformer/core/stf1.hpp"
#include "stformer/model/config.hpp"

namespace stf::pipeline {

struct Stage {
  std::size_t spatial = 128;  // square crop side fed to the network
  std::size_t epochs = 1;
  double lr = 1e-4;

  bool operator==(const Stage&) const = default;
};

struct Augment {
  bool hflip = true;
  bool scale = true;
  bool crop = true;
  double scale_min = 0.8;
  double scale_max = 1.2;

  bool operator==(const Augment&) const = default;
};

/// JSON schema (unknown keys are rejected at every level):
///   preset          "S" | "B" | "L" | "custom"
///   model           ModelConfig keys; required for "custom", overrides for a preset
///   stages          [{spatial, epochs, lr}, ...], spatial strictly increasing
///   batch, seed, dataset, augment {hflip, scale, crop, scale_min, scale_max},
///   random_masks    draw a fresh mask for every batch (otherwise mask_seed is fixed)
///   mask_seed, noise_sigma,
///   steps_per_epoch 0 = one pass over the dataset
///   init_checkpoint optional starting weights instead of a fresh build
struct TrainConfig {
  std::string preset = "S";
  nlohmann::json model_overrides = nlohmann::json::object();
  std::vector<Stage> stages{{128, 100, 1e-4}, {256, 20, 1e-5}};
  std::size_t batch = 1;
  std::uint64_t seed = 0;
  std::string dataset;
  Augment augment;
  bool random_masks = true;
  std::uint64_t mask_seed = 0;
  double noise_sigma = 0.0;
  std::size_t steps_per_epoch = 0;
  std::string init_checkpoint;

  /// Preset plus overrides, validated.
  model::ModelConfig model() const;
  /// Throws ConfigError on the first violated invariant.
  void validate() const;
  /// FNV-1a of the canonical JSON text, as 16 hex digits.
  std::string hash() const;

  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const Stage& s);
void from_json(const nlohmann::json& j, Stage& s);
void to_json(nlohmann::json& j, const Augment& a);
void from_json(const nlohmann::json& j, Augment& a);
void to_json(nlohmann::json& j, const TrainConfig& c);
/// Parses and validates.
void from_json(const nlohmann::json& j, TrainConfig& c);

TrainConfig load_train_config(const std::filesystem::path& path);

}  // namespace stf::pipeline
