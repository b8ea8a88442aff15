#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "stformer/core/rng.hpp"
#include "stformer/tensor/tensor.hpp"

namespace stf {

/// Normal(0, std) truncated to [-2 std, 2 std] by resampling.
template <typename T>
void init_truncated_normal(Tensor<T>& t, double std_dev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, std_dev);
  for (T& v : t.mutable_values()) {
    double x = dist(rng);
    while (std::abs(x) > 2.0 * std_dev) x = dist(rng);
    v = static_cast<T>(x);
  }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void init_fan_in_uniform(Tensor<T>& t, std::size_t fan_in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : t.mutable_values()) v = static_cast<T>(dist(rng));
}

}  // namespace stf
