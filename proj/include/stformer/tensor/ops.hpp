#pragma once

// Differentiable tensor ops. Every op is a pure function of its inputs; when a
// Tape is recording and some input requires a gradient, the op appends its
// backward rule to that tape.
//
// Reductions sum sequentially over the row-major index, so results are
// bit-reproducible for a fixed build.

#include <array>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "stformer/tensor/tape.hpp"
#include "stformer/tensor/tensor.hpp"

namespace stf {

// Elementwise binary ops. Operand dims must be equal, or one operand has a
// single element (scalar), or the second operand's dims are a trailing suffix
// of the first's (bias-style broadcast over leading dims).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add(const Tensor<T>& a, T b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, T b);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& a, T slope);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
/// mean((a - b)^2)
template <typename T> Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b);

/// [..., m, k] x [..., k, n] -> [..., m, n]. `b` may also be a plain [k, n]
/// matrix shared by every batch entry.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> softmax_lastdim(const Tensor<T>& t);

/// Boolean admissibility pattern for masked softmax. `allowed` has dims
/// [m0, ..., n] matching the logits' trailing dims, except that m0 need only
/// divide its counterpart. It is reused cyclically over the leading extent.
struct SoftmaxMask {
  Shape dims;
  std::vector<std::uint8_t> allowed;
};

/// Softmax over admissible entries only. Masked entries get probability 0;
/// a row with no admissible entry is all zeros.
template <typename T>
Tensor<T> masked_softmax_lastdim(const Tensor<T>& t, std::shared_ptr<const SoftmaxMask> mask);

/// Normalises over the trailing dim, then applies gamma * x + beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& t, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

template <typename T> Tensor<T> reshape(const Tensor<T>& t, Shape dims);
template <typename T> Tensor<T> permute(const Tensor<T>& t, const std::vector<std::size_t>& perm);

/// out[i] = index[i] >= 0 ? t[index[i]] : 0, over flat row-major offsets.
/// Gradients scatter-add back, so repeated indices accumulate.
template <typename T>
Tensor<T> gather(const Tensor<T>& t, Shape out_dims,
                 std::shared_ptr<const std::vector<std::int64_t>> index);

template <typename T> Tensor<T> slice_lastdim(const Tensor<T>& t, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> concat_lastdim(const Tensor<T>& a, const Tensor<T>& b);

namespace detail {
/// Throws NonFiniteError naming `op` if any value is NaN or infinite.
template <typename T> void check_finite(std::string_view op, std::span<const T> values);
}  // namespace detail

}  // namespace stf
