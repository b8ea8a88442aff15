#pragma once

#include <array>
#include <cstddef>

#include "stformer/tensor/tensor.hpp"

namespace stf {

using Index3 = std::array<std::size_t, 3>;

struct Conv3dOptions {
  Index3 stride{1, 1, 1};
  Index3 pad{0, 0, 0};
  /// Transposed convolution only: extra trailing rows on the output, < stride.
  Index3 output_padding{0, 0, 0};
};

/// Cross-correlation with zero padding. Channels-last layout:
///   input  [N, D, H, W, Cin] (or [D, H, W, Cin] for a single sample)
///   kernel [kd, kh, kw, Cin, Cout], bias [Cout] or undefined for none.
/// Output extents are floor((in + 2 pad - k) / stride) + 1 per axis.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 const Conv3dOptions& opt = {});

/// Adjoint of conv3d with the same kernel tensor: maps the Cout side back to the
/// Cin side, so `kernel` is [kd, kh, kw, Cout_t, Cin_t] and bias is [Cout_t].
/// Output extent (in - 1) * stride - 2 pad + k + output_padding.
template <typename T>
Tensor<T> conv3d_transposed(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                            const Conv3dOptions& opt = {});

/// Output extent of conv3d along one axis; throws ShapeError if nonpositive.
std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

}  // namespace stf
