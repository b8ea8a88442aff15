#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stformer/tensor/tensor.hpp"

namespace stf {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;  // first moments, one buffer per parameter
  std::vector<std::vector<T>> v;  // second moments

  explicit AdamState(AdamOptions o = {}) : options(o) {}
};

/// One bias-corrected Adam update. `grads[i]` must have as many values as
/// params[i]; moment buffers are zero-initialised on the first call.
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const std::span<const T>> grads, AdamState<T>& state) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), T{0});
      state.v.emplace_back(p.numel(), T{0});
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state tracks a different parameter set");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].numel() || state.m[i].size() != params[i].numel()) {
      throw ShapeError("adam_step: size mismatch for parameter " + std::to_string(i));
    }
  }

  ++state.step;
  const AdamOptions& o = state.options;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = static_cast<double>(grads[i][j]);
      m[j] = static_cast<T>(o.beta1 * m[j] + (1.0 - o.beta1) * g);
      v[j] = static_cast<T>(o.beta2 * v[j] + (1.0 - o.beta2) * g * g);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] = static_cast<T>(w[j] - o.lr * mhat / (std::sqrt(vhat) + o.eps));
    }
  }
}

/// Convenience overload reading each parameter's accumulated gradient;
/// a parameter without a gradient is treated as having a zero gradient.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
  std::vector<std::vector<T>> zeros;
  std::vector<std::span<const T>> grads;
  zeros.reserve(params.size());
  for (auto& p : params) {
    if (p.has_grad()) {
      grads.push_back(p.grad());
    } else {
      zeros.emplace_back(p.numel(), T{0});
      grads.push_back(zeros.back());
    }
  }
  adam_step<T>(params, std::span<const std::span<const T>>(grads), state);
}

}  // namespace stf
