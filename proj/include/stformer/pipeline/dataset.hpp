#pragma once

#include <filesystem>
#include <random>
#include <vector>

#include "stformer/pipeline/train_config.hpp"
#include "stformer/sci/forward_model.hpp"
#include "stformer/tensor/tensor.hpp"

namespace stf::pipeline {

/// Reads a binary PGM (P5) or PPM (P6) image, maxval up to 65535, scaled to [0, 1].
/// Returns [rows, cols, channels].
NdArray<double> read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const NdArray<double>& image);

/// A video cube from either an STF1 file [nx, ny, C, T] or a directory of
/// equally sized PGM/PPM frames in lexicographic order. u8 data is scaled to [0, 1].
template <typename T>
sci::VideoCube<T> load_video(const std::filesystem::path& path);

/// Smooth synthetic clip in [0.15, 0.95]: a drifting Gaussian blob over a
/// sinusoidal background, with per-channel phase offsets. Deterministic in seed.
template <typename T>
sci::VideoCube<T> synthetic_video(std::size_t nx, std::size_t ny, std::size_t channels, std::size_t frames,
                                  std::uint64_t seed);

/// Every *.stf1 cube in `dir`, sorted by file name.
template <typename T>
std::vector<sci::VideoCube<T>> load_clips(const std::filesystem::path& dir);

/// Frames [first, first + count) of a cube.
template <typename T>
sci::VideoCube<T> frame_range(const sci::VideoCube<T>& v, std::size_t first, std::size_t count);

/// One augmented training crop: `frames` consecutive frames, spatial x spatial.
/// With crop off the window is centred and starts at frame 0; with scale off
/// the source window equals the output size; hflip mirrors columns with p = 1/2.
template <typename T>
sci::VideoCube<T> sample_clip(const sci::VideoCube<T>& clip, std::size_t spatial, std::size_t frames,
                              const Augment& aug, std::mt19937_64& rng);

/// Network input/target pair for a batch of ground-truth cubes sharing one mask.
template <typename T>
struct Batch {
  Tensor<T> input;   // [N, B, ., ., IC]
  Tensor<T> target;  // [N, B, nx, ny, OC]
};

template <typename T>
Batch<T> make_batch(const std::vector<sci::VideoCube<T>>& truths, const sci::MaskCube& mask,
                    const model::ModelConfig& c, double noise_sigma, std::uint64_t noise_seed);

/// Measurement of one ground-truth cube, Bayer-mosaicked first for RGB.
template <typename T>
sci::Measurement<T> simulate(const sci::VideoCube<T>& truth, const sci::MaskCube& mask, double noise_sigma,
                             std::uint64_t noise_seed);

}  // namespace stf::pipeline
