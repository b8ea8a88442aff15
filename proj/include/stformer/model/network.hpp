#pragma once

#include "stformer/model/attention.hpp"
#include "stformer/model/params.hpp"
#include "stformer/sci/forward_model.hpp"
#include "stformer/tensor/conv.hpp"

namespace stf::model {

// Network tensors are channels-last 5D: video [N, B, nx, ny, IC|OC] and
// token fields [N, D, H, W, C] with D = B.

template <typename T>
Tensor<T> token_gen(const Tensor<T>& video, const ModelParams<T>& p);

template <typename T>
Tensor<T> grff(const Tensor<T>& field, const GrffParams<T>& p, const ModelConfig& c);

template <typename T>
Tensor<T> stformer_block(const Tensor<T>& field, const BlockParams<T>& p, const ModelConfig& c, bool shifted,
                         AttentionTrace<T>* trace = nullptr);

template <typename T>
Tensor<T> video_reconstruct(const Tensor<T>& field, const ModelParams<T>& p);

/// token_gen, every block (odd indices shifted), then video_reconstruct.
template <typename T>
Tensor<T> network_forward(const Tensor<T>& video, const ModelParams<T>& p, AttentionTrace<T>* trace = nullptr);

/// [nx, ny, C, B] -> [1, B, nx, ny, C]
template <typename T>
Tensor<T> cube_to_tensor(const sci::VideoCube<T>& cube);

/// [N, B, nx, ny, C] sample `n` -> [nx, ny, C, B]
template <typename T>
sci::VideoCube<T> tensor_to_cube(const Tensor<T>& t, std::size_t n = 0);

/// Network input built from a measurement: the normalised initial estimate,
/// split into RGGB sub-lattices for Bayer measurements.
template <typename T>
Tensor<T> network_input(const sci::Measurement<T>& y, const sci::MaskCube& m, const ModelConfig& c);

/// Full reconstruction: init_estimate, network. No tape is recorded.
template <typename T>
sci::VideoCube<T> stformer_forward(const sci::Measurement<T>& y, const sci::MaskCube& m, const ModelParams<T>& p);

}  // namespace stf::model
