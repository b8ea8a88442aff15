#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "json.hpp"
#include "stformer/audit/complexity.hpp"
#include "stformer/core/stf1.hpp"
#include "stformer/pipeline/train_config.hpp"

// Each command reads and writes files and returns a JSON summary for stdout.
namespace stf::pipeline {

using Path = std::filesystem::path;

/// Random binary masks, STF1 u8 [nx, ny, frames].
nlohmann::json cmd_mask(std::size_t nx, std::size_t ny, std::size_t frames, std::uint64_t seed, const Path& out);

/// A smooth synthetic clip, STF1 [nx, ny, channels, frames] in the given dtype.
nlohmann::json cmd_synth(std::size_t nx, std::size_t ny, std::size_t channels, std::size_t frames,
                         std::uint64_t seed, DType dtype, const Path& out);

struct EncodeOptions {
  double sigma = 0.0;
  bool color = false;      // expect RGB input and Bayer-mosaic it first
  std::uint64_t seed = 0;  // noise seed; measurement k uses an independent stream
  DType dtype = DType::f32;
};

/// One measurement per B consecutive frames, stacked as STF1 [nx, ny, K].
nlohmann::json cmd_encode(const Path& video, const Path& masks, const EncodeOptions& opt, const Path& out);

/// Fresh weights for the model described by a train config.
nlohmann::json cmd_init(const TrainConfig& config, std::uint64_t seed, DType dtype, const Path& out);

/// Trains into `out_dir` (checkpoint plus manifest.json). Starts from
/// config.init_checkpoint when set, otherwise from fresh weights.
nlohmann::json cmd_train(const TrainConfig& config, DType dtype, const Path& out_dir, std::ostream* log);

/// Measurements [nx, ny] or [nx, ny, K] to a cube [nx, ny, OC, B*K].
nlohmann::json cmd_reconstruct(const Path& measurement, const Path& masks, const Path& checkpoint, DType dtype,
                               const Path& out);

/// QualityReport JSON of a reconstruction against ground truth.
nlohmann::json cmd_eval(const Path& recon, const Path& truth, const Path& out);

struct FlopsRequest {
  std::optional<model::ModelConfig> model;  // whole-network report
  std::size_t nx = 256, ny = 256;
  std::optional<audit::AttentionDims> dims;  // attention audit with instrumented counts
};

nlohmann::json cmd_flops(const FlopsRequest& request, const Path& out);

}  // namespace stf::pipeline
