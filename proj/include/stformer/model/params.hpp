#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stformer/model/config.hpp"
#include "stformer/tensor/tensor.hpp"

namespace stf::model {

template <typename T>
struct ConvParams {
  Tensor<T> weight;  // [kd, kh, kw, Cin, Cout]
  Tensor<T> bias;    // [Cout]
};

/// Spatial-branch weights. Projections are C x C; the relative position bias
/// table holds one entry per head for each of the (2Gh-1)(2Gw-1) offsets.
template <typename T>
struct SpatialAttentionParams {
  Tensor<T> wq, wk, wv, wp;
  Tensor<T> bias_table;  // [(2Gh-1)(2Gw-1), heads]
};

/// Temporal-branch weights: Q/K/V project C -> C/2, output projects C/2 -> C.
template <typename T>
struct TemporalAttentionParams {
  Tensor<T> wq, wk, wv, wp;
  Tensor<T> bias_table;  // [2D-1, heads]
};

template <typename T>
struct ResUnitParams {
  ConvParams<T> conv1, conv2;  // 3x3x3, C/2 -> C/2
};

template <typename T>
struct GrffParams {
  ResUnitParams<T> res1, res2;
};

template <typename T>
struct BlockParams {
  Tensor<T> norm1_gamma, norm1_beta;
  SpatialAttentionParams<T> ssa;
  TemporalAttentionParams<T> tsa;
  Tensor<T> norm2_gamma, norm2_beta;
  GrffParams<T> grff;
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  std::array<ConvParams<T>, 5> token_gen;
  std::vector<BlockParams<T>> blocks;
  ConvParams<T> vr_up;     // transposed, kernel [1, 4, 4, C, C]
  ConvParams<T> vr_conv1;  // 3x3x3, C -> C/2
  ConvParams<T> vr_conv2;  // 3x3x3, C/2 -> OC

  /// Every learnable tensor with a stable dotted name, in a fixed order.
  /// The tensors alias the ones held here.
  std::vector<std::pair<std::string, Tensor<T>>> named() const;
  std::vector<Tensor<T>> tensors() const;
  std::size_t parameter_count() const;
};

/// Token-generator channel schedule IC -> C/4 -> C/4 -> C/2 -> C/2 -> C.
std::array<std::size_t, 6> token_gen_channels(const ModelConfig& c);

/// Allocates every parameter. Projection matrices ~ truncated normal (std 0.02),
/// conv kernels ~ U(+-1/sqrt(fan_in)), biases and position-bias tables zero,
/// LayerNorm gamma 1 / beta 0. Each tensor draws from its own stream derived from `seed`.
template <typename T>
ModelParams<T> build_model(const ModelConfig& config, std::uint64_t seed);

/// Allocates the same layout with every value zero (LayerNorm gamma = 1).
template <typename T>
ModelParams<T> zero_model(const ModelConfig& config);

template <typename To, typename From>
ModelParams<To> convert_params(const ModelParams<From>& p);

}  // namespace stf::model
