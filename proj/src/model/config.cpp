#include "stformer/model/config.hpp"

#include <numeric>
#include <set>

#include "stformer/core/error.hpp"

namespace stf::model {

std::size_t ModelConfig::num_blocks() const {
  return std::accumulate(blocks_per_stage.begin(), blocks_per_stage.end(), std::size_t{0});
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (channels == 0 || channels % 4) fail("channels must be a positive multiple of 4");
  if (heads == 0 || channels % (2 * heads)) fail("channels must be divisible by 2 * heads");
  if (num_blocks() == 0) fail("at least one block is required");
  if (window_h == 0 || window_w == 0) fail("window extents must be >= 1");
  if (frames == 0) fail("frames must be >= 1");
  const bool gray = in_channels == 1 && out_channels == 1;
  const bool rgb = in_channels == 4 && out_channels == 3;
  if (!gray && !rgb) fail("(in_channels, out_channels) must be (1, 1) or (4, 3)");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) fail("leaky_slope must lie in [0, 1)");
  if (!(norm_eps > 0.0)) fail("norm_eps must be positive");
}

ModelConfig ModelConfig::preset(std::string_view name) {
  ModelConfig c;
  if (name == "S") {
    c.channels = 64;
    c.heads = 2;
    c.blocks_per_stage = {2, 2, 2, 2};
  } else if (name == "B") {
    c.channels = 256;
    c.heads = 8;
    c.blocks_per_stage = {2, 2, 2, 2};
  } else if (name == "L") {
    c.channels = 256;
    c.heads = 8;
    c.blocks_per_stage = {4, 4, 4, 4};
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected S, B or L)");
  }
  return c;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"channels", c.channels},       {"blocks_per_stage", c.blocks_per_stage},
                     {"heads", c.heads},             {"window_h", c.window_h},
                     {"window_w", c.window_w},       {"frames", c.frames},
                     {"in_channels", c.in_channels}, {"out_channels", c.out_channels},
                     {"leaky_slope", c.leaky_slope}, {"norm_eps", c.norm_eps}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const std::set<std::string> known{"channels",    "blocks_per_stage", "heads",        "window_h",
                                           "window_w",    "frames",           "in_channels",  "out_channels",
                                           "leaky_slope", "norm_eps"};
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("model config: unknown key '" + key + "'");
  }
  try {
    if (j.contains("channels")) j.at("channels").get_to(c.channels);
    if (j.contains("blocks_per_stage")) j.at("blocks_per_stage").get_to(c.blocks_per_stage);
    if (j.contains("heads")) j.at("heads").get_to(c.heads);
    if (j.contains("window_h")) j.at("window_h").get_to(c.window_h);
    if (j.contains("window_w")) j.at("window_w").get_to(c.window_w);
    if (j.contains("frames")) j.at("frames").get_to(c.frames);
    if (j.contains("in_channels")) j.at("in_channels").get_to(c.in_channels);
    if (j.contains("out_channels")) j.at("out_channels").get_to(c.out_channels);
    if (j.contains("leaky_slope")) j.at("leaky_slope").get_to(c.leaky_slope);
    if (j.contains("norm_eps")) j.at("norm_eps").get_to(c.norm_eps);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

}  // namespace stf::model
