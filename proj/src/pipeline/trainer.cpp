#include "stformer/pipeline/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "stformer/core/error.hpp"
#include "stformer/core/rng.hpp"
#include "stformer/model/checkpoint.hpp"
#include "stformer/model/network.hpp"
#include "stformer/pipeline/dataset.hpp"
#include "stformer/tensor/adam.hpp"
#include "stformer/tensor/ops.hpp"
#include "stformer/tensor/tape.hpp"

namespace stf::pipeline {

namespace {

// Independent PRNG streams derived from the run seed.
enum Stream : std::uint64_t { kAugment = 1, kMask = 2, kNoise = 3 };

template <typename T>
void check_clips(const std::vector<sci::VideoCube<T>>& clips, const model::ModelConfig& m) {
  if (clips.empty()) throw IoError("training needs at least one clip");
  for (const auto& c : clips) {
    if (c.channels() != m.out_channels) {
      throw ConfigError("clip has " + std::to_string(c.channels()) + " channels but the model outputs " +
                        std::to_string(m.out_channels));
    }
    if (c.length() < m.frames) {
      throw ShapeError("clip has " + std::to_string(c.length()) + " frames, the model needs " +
                       std::to_string(m.frames));
    }
  }
}

Augment no_augment() { return {false, false, false, 1.0, 1.0}; }

}  // namespace

void to_json(nlohmann::json& j, const RunManifest& m) {
  j = {{"config_hash", m.config_hash}, {"seed", m.seed},         {"checkpoint", m.checkpoint},
       {"steps", m.steps},             {"loss_curve", m.loss_curve}, {"final_report", m.final_report}};
}

void from_json(const nlohmann::json& j, RunManifest& m) {
  j.at("config_hash").get_to(m.config_hash);
  j.at("seed").get_to(m.seed);
  j.at("checkpoint").get_to(m.checkpoint);
  j.at("steps").get_to(m.steps);
  j.at("loss_curve").get_to(m.loss_curve);
  j.at("final_report").get_to(m.final_report);
}

template <typename T>
sci::VideoCube<T> evaluation_clip(const TrainConfig& config, const std::vector<sci::VideoCube<T>>& clips) {
  const model::ModelConfig m = config.model();
  check_clips(clips, m);
  const std::size_t side = std::min({config.stages.back().spatial, clips[0].nx(), clips[0].ny()});
  std::mt19937_64 unused(0);
  return sample_clip(clips[0], side - side % (m.color() ? 2 : m.token_stride()), m.frames, no_augment(), unused);
}

template <typename T>
RunManifest train(const TrainConfig& config, const std::vector<sci::VideoCube<T>>& clips,
                  model::ModelParams<T>& params, const TrainOptions& options) {
  config.validate();
  const model::ModelConfig m = config.model();
  if (!(params.config == m)) throw ConfigError("train: parameters were built for a different model config");
  check_clips(clips, m);

  RunManifest manifest;
  manifest.config_hash = config.hash();
  manifest.seed = config.seed;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    manifest.checkpoint = kCheckpointFile;
  }
  auto write_checkpoint_file = [&] {
    if (!options.out_dir.empty()) model::save_checkpoint(options.out_dir / kCheckpointFile, params);
  };

  std::vector<Tensor<T>> weights = params.tensors();
  for (auto& w : weights) w.set_requires_grad(true);
  AdamState<T> adam;
  std::mt19937_64 rng(mix_seed(config.seed, kAugment));
  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();  // forces a shuffle before the first batch
  std::uint64_t batch_index = 0;

  write_checkpoint_file();
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const Stage& stage = config.stages[s];
    adam.options.lr = stage.lr;
    const std::size_t steps = config.steps_per_epoch
                                  ? config.steps_per_epoch
                                  : (clips.size() + config.batch - 1) / config.batch;
    const sci::MaskCube fixed_mask = sci::gen_masks(stage.spatial, stage.spatial, m.frames, config.mask_seed);
    for (std::size_t epoch = 0; epoch < stage.epochs; ++epoch) {
      double total = 0;
      for (std::size_t step = 0; step < steps; ++step, ++batch_index) {
        std::vector<sci::VideoCube<T>> truths;
        for (std::size_t b = 0; b < config.batch; ++b) {
          if (cursor == order.size()) {
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
          }
          truths.push_back(sample_clip(clips[order[cursor++]], stage.spatial, m.frames, config.augment, rng));
        }
        const sci::MaskCube mask =
            config.random_masks
                ? sci::gen_masks(stage.spatial, stage.spatial, m.frames, mix_seed(config.seed, kMask + 8 * batch_index))
                : fixed_mask;
        const Batch<T> batch =
            make_batch(truths, mask, m, config.noise_sigma, mix_seed(config.seed, kNoise + 8 * batch_index));

        for (auto& w : weights) w.zero_grad();
        Tape<T> tape;
        T loss_value;
        {
          typename Tape<T>::Recording rec(tape);
          const Tensor<T> loss = mse_loss(model::network_forward(batch.input, params), batch.target);
          loss_value = loss.item();
          if (!std::isfinite(static_cast<double>(loss_value))) {
            throw NonFiniteError("training loss became non-finite at stage " + std::to_string(s) + ", epoch " +
                                 std::to_string(epoch) + ", step " + std::to_string(step));
          }
          tape.backward(loss);
        }
        adam_step<T>(weights, adam);
        ++manifest.steps;
        total += static_cast<double>(loss_value);
      }
      const double mean_loss = steps ? total / static_cast<double>(steps) : 0.0;
      manifest.loss_curve.push_back(mean_loss);
      write_checkpoint_file();
      if (options.log) {
        *options.log << nlohmann::json{{"stage", s}, {"epoch", epoch}, {"loss", mean_loss}, {"steps", manifest.steps}}
                     << std::endl;
      }
    }
  }
  for (auto& w : weights) {
    w.zero_grad();
    w.set_requires_grad(false);
  }

  const sci::VideoCube<T> truth = evaluation_clip(config, clips);
  const sci::MaskCube mask = sci::gen_masks(truth.nx(), truth.ny(), m.frames, config.mask_seed);
  const sci::VideoCube<T> recon = model::stformer_forward(simulate(truth, mask, 0.0, 0), mask, params);
  manifest.final_report = metrics::eval_dataset(recon, truth);
  if (!options.out_dir.empty()) {
    std::ofstream os(options.out_dir / kManifestFile);
    os << nlohmann::json(manifest).dump(2) << "\n";
    if (!os) throw IoError("cannot write " + (options.out_dir / kManifestFile).string());
  }
  return manifest;
}

TrainConfig toy_train_config() {
  TrainConfig c;
  c.preset = "custom";
  c.model_overrides = {{"channels", 16}, {"blocks_per_stage", {2}}, {"heads", 2},
                       {"window_h", 8},  {"window_w", 8},          {"frames", 4}};
  c.stages = {{32, 10, 1e-3}};
  c.steps_per_epoch = 50;
  c.batch = 1;
  c.seed = 1;
  c.augment = no_augment();
  c.random_masks = false;
  c.mask_seed = 7;
  return c;
}

template RunManifest train(const TrainConfig&, const std::vector<sci::VideoCube<float>>&, model::ModelParams<float>&,
                           const TrainOptions&);
template RunManifest train(const TrainConfig&, const std::vector<sci::VideoCube<double>>&,
                           model::ModelParams<double>&, const TrainOptions&);
template sci::VideoCube<float> evaluation_clip(const TrainConfig&, const std::vector<sci::VideoCube<float>>&);
template sci::VideoCube<double> evaluation_clip(const TrainConfig&, const std::vector<sci::VideoCube<double>>&);

}  // namespace stf::pipeline
