#include "stformer/model/network.hpp"

#include <string>

#include "stformer/tensor/tape.hpp"

namespace stf::model {

namespace {

const Conv3dOptions kSame{{1, 1, 1}, {1, 1, 1}, {0, 0, 0}};

template <typename T>
Tensor<T> conv(const Tensor<T>& x, const ConvParams<T>& p, const Conv3dOptions& opt = kSame) {
  return conv3d(x, p.weight, p.bias, opt);
}

template <typename T>
Tensor<T> res_unit(const Tensor<T>& x, const ResUnitParams<T>& p, T slope) {
  return add(x, conv(leaky_relu(conv(x, p.conv1), slope), p.conv2));
}

}  // namespace

template <typename T>
Tensor<T> token_gen(const Tensor<T>& video, const ModelParams<T>& p) {
  const ModelConfig& c = p.config;
  if (video.rank() != 5 || video.dim(4) != c.in_channels) {
    throw ShapeError("token_gen: expected [N, B, nx, ny, " + std::to_string(c.in_channels) + "], got " +
                     shape_str(video.dims()));
  }
  const std::size_t s = c.token_stride();
  if (video.dim(2) % s || video.dim(3) % s) {
    throw ShapeError("token_gen: spatial extents " + shape_str(video.dims()) + " not divisible by " +
                     std::to_string(s));
  }
  const T slope = static_cast<T>(c.leaky_slope);
  Conv3dOptions first = kSame;
  first.stride = {1, s, s};
  Tensor<T> x = leaky_relu(conv(video, p.token_gen[0], first), slope);
  for (std::size_t i = 1; i < p.token_gen.size(); ++i) x = leaky_relu(conv(x, p.token_gen[i]), slope);
  return x;
}

template <typename T>
Tensor<T> grff(const Tensor<T>& field, const GrffParams<T>& p, const ModelConfig& c) {
  const std::size_t C = field.dim(field.rank() - 1);
  if (C % 2) throw ShapeError("grff: channel count must be even, got " + std::to_string(C));
  const T slope = static_cast<T>(c.leaky_slope);
  const Tensor<T> r1 = res_unit(slice_lastdim(field, 0, C / 2), p.res1, slope);
  const Tensor<T> r2 = res_unit(add(slice_lastdim(field, C / 2, C), r1), p.res2, slope);
  return concat_lastdim(r1, r2);
}

template <typename T>
Tensor<T> stformer_block(const Tensor<T>& field, const BlockParams<T>& p, const ModelConfig& c, bool shifted,
                         AttentionTrace<T>* trace) {
  const T eps = static_cast<T>(c.norm_eps);
  const Tensor<T> u = layer_norm(field, p.norm1_gamma, p.norm1_beta, eps);
  const Tensor<T> st = add(add(field, slw_msa(u, p.ssa, c, shifted, trace)), tw_msa(u, p.tsa, c, trace));
  return add(st, grff(layer_norm(st, p.norm2_gamma, p.norm2_beta, eps), p.grff, c));
}

template <typename T>
Tensor<T> video_reconstruct(const Tensor<T>& field, const ModelParams<T>& p) {
  const ModelConfig& c = p.config;
  if (field.rank() != 5 || field.dim(4) != c.channels) {
    throw ShapeError("video_reconstruct: expected [N, D, H, W, " + std::to_string(c.channels) + "], got " +
                     shape_str(field.dims()));
  }
  const T slope = static_cast<T>(c.leaky_slope);
  const Conv3dOptions up{{1, 2, 2}, {0, 1, 1}, {0, 0, 0}};
  Tensor<T> x = leaky_relu(conv3d_transposed(field, p.vr_up.weight, p.vr_up.bias, up), slope);
  x = leaky_relu(conv(x, p.vr_conv1), slope);
  return conv(x, p.vr_conv2);
}

template <typename T>
Tensor<T> network_forward(const Tensor<T>& video, const ModelParams<T>& p, AttentionTrace<T>* trace) {
  Tensor<T> x = token_gen(video, p);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) x = stformer_block(x, p.blocks[b], p.config, b % 2 == 1, trace);
  return video_reconstruct(x, p);
}

template <typename T>
Tensor<T> cube_to_tensor(const sci::VideoCube<T>& cube) {
  const std::size_t nx = cube.nx(), ny = cube.ny(), C = cube.channels(), B = cube.length();
  std::vector<T> v(cube.frames.data.size());
  for (std::size_t f = 0; f < B; ++f)
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t ch = 0; ch < C; ++ch) v[((f * nx + x) * ny + y) * C + ch] = cube.at(x, y, ch, f);
  return Tensor<T>({1, B, nx, ny, C}, std::move(v));
}

template <typename T>
sci::VideoCube<T> tensor_to_cube(const Tensor<T>& t, std::size_t n) {
  if (t.rank() != 5 || n >= t.dim(0)) throw ShapeError("tensor_to_cube: bad tensor " + shape_str(t.dims()));
  const std::size_t B = t.dim(1), nx = t.dim(2), ny = t.dim(3), C = t.dim(4);
  NdArray<T> a{{nx, ny, C, B}, std::vector<T>(nx * ny * C * B)};
  const auto src = t.values();
  const std::size_t base = n * B * nx * ny * C;
  for (std::size_t f = 0; f < B; ++f)
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t ch = 0; ch < C; ++ch) {
          a.data[((x * ny + y) * C + ch) * B + f] = src[base + ((f * nx + x) * ny + y) * C + ch];
        }
  return sci::VideoCube<T>(std::move(a));
}

template <typename T>
Tensor<T> network_input(const sci::Measurement<T>& y, const sci::MaskCube& m, const ModelConfig& c) {
  if (c.color() != y.bayer.has_value()) {
    throw ConfigError(c.color() ? "model expects a Bayer measurement" : "model expects a grayscale measurement");
  }
  if (m.frames() != c.frames) {
    throw ConfigError("mask has B=" + std::to_string(m.frames()) + ", model is configured for B=" +
                      std::to_string(c.frames));
  }
  return cube_to_tensor(sci::init_estimate(y, m));
}

template <typename T>
sci::VideoCube<T> stformer_forward(const sci::Measurement<T>& y, const sci::MaskCube& m, const ModelParams<T>& p) {
  typename Tape<T>::Pause pause;
  return tensor_to_cube(network_forward(network_input(y, m, p.config), p));
}

#define STF_INSTANTIATE_NET(T)                                                                                   \
  template Tensor<T> token_gen(const Tensor<T>&, const ModelParams<T>&);                                        \
  template Tensor<T> grff(const Tensor<T>&, const GrffParams<T>&, const ModelConfig&);                          \
  template Tensor<T> stformer_block(const Tensor<T>&, const BlockParams<T>&, const ModelConfig&, bool,          \
                                    AttentionTrace<T>*);                                                         \
  template Tensor<T> video_reconstruct(const Tensor<T>&, const ModelParams<T>&);                                \
  template Tensor<T> network_forward(const Tensor<T>&, const ModelParams<T>&, AttentionTrace<T>*);              \
  template Tensor<T> cube_to_tensor(const sci::VideoCube<T>&);                                                  \
  template sci::VideoCube<T> tensor_to_cube(const Tensor<T>&, std::size_t);                                     \
  template Tensor<T> network_input(const sci::Measurement<T>&, const sci::MaskCube&, const ModelConfig&);       \
  template sci::VideoCube<T> stformer_forward(const sci::Measurement<T>&, const sci::MaskCube&,                 \
                                              const ModelParams<T>&);

STF_INSTANTIATE_NET(float)
STF_INSTANTIATE_NET(double)

}  // namespace stf::model
