#include "stformer/pipeline/train_config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "stformer/core/error.hpp"
#include "stformer/core/rng.hpp"

namespace stf::pipeline {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename V>
void read(const nlohmann::json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

model::ModelConfig TrainConfig::model() const {
  nlohmann::json merged = preset == "custom" ? model::ModelConfig{} : model::ModelConfig::preset(preset);
  for (const auto& [k, v] : model_overrides.items()) merged[k] = v;
  // Unknown override keys are rejected by ModelConfig's own parser.
  auto out = merged.get<model::ModelConfig>();
  out.validate();
  return out;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (preset != "S" && preset != "B" && preset != "L" && preset != "custom") {
    fail("preset must be S, B, L or custom");
  }
  if (preset == "custom" && model_overrides.empty()) fail("a custom preset needs a 'model' object");
  const model::ModelConfig m = model();
  if (stages.empty()) fail("at least one stage is required");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const Stage& s = stages[i];
    if (!(s.lr > 0)) fail("stage " + std::to_string(i) + ": lr must be positive");
    if (s.spatial == 0 || s.spatial % m.token_stride() != 0) {
      fail("stage " + std::to_string(i) + ": spatial must be a positive multiple of " +
           std::to_string(m.token_stride()));
    }
    if (m.color() && s.spatial % 2 != 0) fail("stage " + std::to_string(i) + ": Bayer data needs an even spatial size");
    if (i > 0 && s.spatial <= stages[i - 1].spatial) fail("stages must be ordered by increasing spatial size");
  }
  if (batch == 0) fail("batch must be >= 1");
  if (!(augment.scale_min > 0 && augment.scale_min <= augment.scale_max)) {
    fail("augment scale range must satisfy 0 < scale_min <= scale_max");
  }
  if (!(noise_sigma >= 0)) fail("noise_sigma must be >= 0");
}

std::string TrainConfig::hash() const {
  const std::string text = nlohmann::json(*this).dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(text.data(), text.size())));
  return buf;
}

void to_json(nlohmann::json& j, const Stage& s) { j = {{"spatial", s.spatial}, {"epochs", s.epochs}, {"lr", s.lr}}; }

void from_json(const nlohmann::json& j, Stage& s) {
  reject_unknown(j, {"spatial", "epochs", "lr"}, "stage");
  read(j, "spatial", s.spatial);
  read(j, "epochs", s.epochs);
  read(j, "lr", s.lr);
}

void to_json(nlohmann::json& j, const Augment& a) {
  j = {{"hflip", a.hflip}, {"scale", a.scale}, {"crop", a.crop}, {"scale_min", a.scale_min},
       {"scale_max", a.scale_max}};
}

void from_json(const nlohmann::json& j, Augment& a) {
  reject_unknown(j, {"hflip", "scale", "crop", "scale_min", "scale_max"}, "augment");
  read(j, "hflip", a.hflip);
  read(j, "scale", a.scale);
  read(j, "crop", a.crop);
  read(j, "scale_min", a.scale_min);
  read(j, "scale_max", a.scale_max);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"preset", c.preset},
       {"model", c.model_overrides},
       {"stages", c.stages},
       {"batch", c.batch},
       {"seed", c.seed},
       {"dataset", c.dataset},
       {"augment", c.augment},
       {"random_masks", c.random_masks},
       {"mask_seed", c.mask_seed},
       {"noise_sigma", c.noise_sigma},
       {"steps_per_epoch", c.steps_per_epoch},
       {"init_checkpoint", c.init_checkpoint}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  reject_unknown(j,
                 {"preset", "model", "stages", "batch", "seed", "dataset", "augment", "random_masks", "mask_seed",
                  "noise_sigma", "steps_per_epoch", "init_checkpoint"},
                 "train config");
  read(j, "preset", c.preset);
  if (j.contains("model")) {
    if (!j.at("model").is_object()) throw ConfigError("train config: 'model' must be an object");
    c.model_overrides = j.at("model");
  }
  if (j.contains("stages")) {
    if (!j.at("stages").is_array()) throw ConfigError("train config: 'stages' must be an array");
    c.stages.clear();
    for (const auto& s : j.at("stages")) c.stages.push_back(s.get<Stage>());
  }
  read(j, "batch", c.batch);
  read(j, "seed", c.seed);
  read(j, "dataset", c.dataset);
  if (j.contains("augment")) c.augment = j.at("augment").get<Augment>();
  read(j, "random_masks", c.random_masks);
  read(j, "mask_seed", c.mask_seed);
  read(j, "noise_sigma", c.noise_sigma);
  read(j, "steps_per_epoch", c.steps_per_epoch);
  read(j, "init_checkpoint", c.init_checkpoint);
  c.validate();
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return j.get<TrainConfig>();
}

}  // namespace stf::pipeline
