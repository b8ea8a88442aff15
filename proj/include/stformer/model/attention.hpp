#pragma once

// Spatial local-window and temporal multi-head self-attention over a token
// field laid out [N, D, H, W, C].

#include <cstdint>
#include <memory>
#include <vector>

#include "stformer/model/params.hpp"
#include "stformer/tensor/ops.hpp"

namespace stf::model {

/// Window grid over an H x W plane. The plane is zero-padded to multiples of
/// the window, then (for shifted blocks) cyclically rolled by (-shift_h, -shift_w).
struct WindowGeometry {
  std::size_t height = 0, width = 0;
  std::size_t window_h = 0, window_w = 0;
  std::size_t shift_h = 0, shift_w = 0;
  std::size_t padded_h = 0, padded_w = 0;

  static WindowGeometry make(std::size_t height, std::size_t width, std::size_t window_h, std::size_t window_w,
                             std::size_t shift_h = 0, std::size_t shift_w = 0);

  std::size_t windows_h() const { return padded_h / window_h; }
  std::size_t windows_w() const { return padded_w / window_w; }
  std::size_t windows() const { return windows_h() * windows_w(); }
  std::size_t tokens() const { return window_h * window_w; }
  bool padded() const { return padded_h != height || padded_w != width; }
  bool shifted() const { return shift_h || shift_w; }

  /// Original (unpadded) plane offset of token `j` of window `w`, or -1 for padding.
  std::int64_t source(std::size_t w, std::size_t j) const;
};

/// [N, D, H, W, C] -> [N * D * windows, J, C] with J = Gh * Gw; padding reads as zero.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& field, const WindowGeometry& g);

/// Inverse of window_partition: [N * D * windows, J, C] -> [N, D, H, W, C], padding cropped.
template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, const WindowGeometry& g, std::size_t batch, std::size_t depth);

/// Admissible (query, key) pairs per window, [windows, heads, J, J]; null when
/// every pair is admissible. Keys that are padding are excluded, and in shifted
/// windows a query only sees keys from the same pre-shift region.
std::shared_ptr<const SoftmaxMask> window_attention_mask(const WindowGeometry& g, std::size_t heads);

/// Gather index mapping a [(2Gh-1)(2Gw-1), heads] table onto [heads, J, J].
std::shared_ptr<const std::vector<std::int64_t>> spatial_bias_index(std::size_t window_h, std::size_t window_w,
                                                                    std::size_t heads);
/// Gather index mapping a [2D-1, heads] table onto [heads, D, D].
std::shared_ptr<const std::vector<std::int64_t>> temporal_bias_index(std::size_t depth, std::size_t heads);

/// Receives the attention probability tensors a branch computes.
template <typename T>
struct AttentionTrace {
  std::vector<Tensor<T>> probabilities;
};

/// Spatial local-window MSA. Per window and head: softmax(Q K^T / sqrt(d_h) + B_s) V,
/// heads concatenated and projected by W_p, then windows reversed into the field.
template <typename T>
Tensor<T> slw_msa(const Tensor<T>& field, const SpatialAttentionParams<T>& p, const ModelConfig& c, bool shifted,
                  AttentionTrace<T>* trace = nullptr);

/// Temporal MSA: each spatial site attends over its D tokens in C/2 channels,
/// then W_p lifts back to C. D must equal the configured frame count.
template <typename T>
Tensor<T> tw_msa(const Tensor<T>& field, const TemporalAttentionParams<T>& p, const ModelConfig& c,
                 AttentionTrace<T>* trace = nullptr);

}  // namespace stf::model
