#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace stf::model {

struct ModelConfig {
  std::size_t channels = 64;  // token channels C
  std::vector<std::size_t> blocks_per_stage{2, 2, 2, 2};
  std::size_t heads = 2;
  std::size_t window_h = 7;
  std::size_t window_w = 7;
  std::size_t frames = 8;        // compression rate B, also the token depth D
  std::size_t in_channels = 1;   // 1 for grayscale, 4 for Bayer sub-lattice estimates
  std::size_t out_channels = 1;  // 1 for grayscale, 3 for RGB
  double leaky_slope = 0.1;
  double norm_eps = 1e-5;

  std::size_t num_blocks() const;
  std::size_t shift_h() const { return window_h / 2; }
  std::size_t shift_w() const { return window_w / 2; }
  bool color() const { return in_channels == 4; }
  /// Spatial downsampling of the token grid relative to the network input.
  std::size_t token_stride() const { return color() ? 1 : 2; }

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  /// "S", "B" or "L".
  static ModelConfig preset(std::string_view name);

  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
/// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace stf::model
