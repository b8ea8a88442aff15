#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stformer/metrics/quality.hpp"
#include "stformer/model/params.hpp"
#include "stformer/pipeline/train_config.hpp"
#include "stformer/sci/forward_model.hpp"

namespace stf::pipeline {

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string checkpoint;          // file name inside the run directory, empty when nothing was written
  std::size_t steps = 0;           // Adam updates performed
  std::vector<double> loss_curve;  // mean training loss of every epoch, stages concatenated
  metrics::QualityReport final_report;
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::ostream* log = nullptr;    // one JSON line per epoch
};

inline constexpr const char* kCheckpointFile = "checkpoint.stfc";
inline constexpr const char* kManifestFile = "manifest.json";

/// Staged Adam training on MSE between the network output and the ground truth.
/// `params` is updated in place. Every epoch draws `steps_per_epoch` batches
/// (one pass over the shuffled clips when 0); each batch is simulated through
/// the forward model with a fresh random mask or the fixed `mask_seed` mask.
/// The final report scores the first clip, centre-cropped to the last stage
/// size, under the `mask_seed` mask. Throws NonFiniteError if the loss diverges.
template <typename T>
RunManifest train(const TrainConfig& config, const std::vector<sci::VideoCube<T>>& clips,
                  model::ModelParams<T>& params, const TrainOptions& options = {});

/// The fixed evaluation sample used for the final report.
template <typename T>
sci::VideoCube<T> evaluation_clip(const TrainConfig& config, const std::vector<sci::VideoCube<T>>& clips);

/// Small overfitting setup: C=16, one block pair, window 8, 32x32 grayscale, B=4,
/// fixed mask, no augmentation, 500 Adam steps at lr 1e-3.
TrainConfig toy_train_config();

}  // namespace stf::pipeline
