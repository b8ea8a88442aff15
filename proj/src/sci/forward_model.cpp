#include "stformer/sci/forward_model.hpp"

#include <random>
#include <string>

namespace stf::sci {

MaskCube::MaskCube(NdArray<std::uint8_t> v, std::uint64_t s) : values(std::move(v)), seed(s) {
  if (values.rank() != 3 || values.numel() == 0) {
    throw ShapeError("MaskCube: expected non-empty [nx, ny, B], got " + shape_str(values.dims));
  }
  for (std::uint8_t b : values.data) {
    if (b > 1) throw ShapeError("MaskCube: entries must be 0 or 1");
  }
}

template <typename T>
VideoCube<T>::VideoCube(NdArray<T> f) : frames(std::move(f)) {
  if (frames.rank() != 4 || frames.numel() == 0) {
    throw ShapeError("VideoCube: expected non-empty [nx, ny, C, B], got " + shape_str(frames.dims));
  }
}

MaskCube gen_masks(std::size_t nx, std::size_t ny, std::size_t frames, std::uint64_t seed, double p) {
  if (nx == 0 || ny == 0 || frames == 0) throw ShapeError("gen_masks: extents must be >= 1");
  if (!(p > 0.0 && p < 1.0)) throw ContractError("gen_masks: p must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  NdArray<std::uint8_t> v({nx, ny, frames});
  for (auto& b : v.data) b = coin(rng) ? 1 : 0;
  return MaskCube(std::move(v), seed);
}

namespace {

template <typename T>
void require_grid(const char* op, const VideoCube<T>& x, const MaskCube& m) {
  if (x.nx() != m.nx() || x.ny() != m.ny() || x.length() != m.frames()) {
    throw ShapeError(std::string(op) + ": video " + shape_str(x.frames.dims) + " vs masks " +
                     shape_str(m.values.dims));
  }
}

void require_even(const char* op, std::size_t nx, std::size_t ny) {
  if (nx % 2 || ny % 2) {
    throw ShapeError(std::string(op) + ": spatial extents must be even, got " + std::to_string(nx) + "x" +
                     std::to_string(ny));
  }
}

}  // namespace

template <typename T>
VideoCube<T> modulate(const VideoCube<T>& x, const MaskCube& m) {
  require_grid("modulate", x, m);
  VideoCube<T> out = x;
  for (std::size_t i = 0; i < x.nx(); ++i)
    for (std::size_t j = 0; j < x.ny(); ++j)
      for (std::size_t c = 0; c < x.channels(); ++c)
        for (std::size_t f = 0; f < x.length(); ++f) out.frames.data[x.offset(i, j, c, f)] *= static_cast<T>(m.at(i, j, f));
  return out;
}

template <typename T>
Measurement<T> integrate(const VideoCube<T>& x_mod, double sigma, std::uint64_t seed) {
  if (x_mod.channels() != 1) {
    throw ShapeError("integrate: expects a single-channel cube; mosaic colour video first");
  }
  if (sigma < 0) throw ContractError("integrate: sigma must be >= 0");
  Measurement<T> y;
  y.values = NdArray<T>({x_mod.nx(), x_mod.ny()});
  y.noise_sigma = sigma;
  for (std::size_t i = 0; i < x_mod.nx(); ++i)
    for (std::size_t j = 0; j < x_mod.ny(); ++j) {
      T acc{0};
      for (std::size_t f = 0; f < x_mod.length(); ++f) acc += x_mod.at(i, j, 0, f);
      y.values.data[i * x_mod.ny() + j] = acc;
    }
  if (sigma > 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (T& v : y.values.data) v = static_cast<T>(v + noise(rng));
  }
  return y;
}

template <typename T>
SensingMatrix<T>::SensingMatrix(const MaskCube& m) : pixels_(m.nx() * m.ny()), frames_(m.frames()) {
  diagonals_.assign(frames_, std::vector<T>(pixels_));
  for (std::size_t p = 0; p < pixels_; ++p)
    for (std::size_t f = 0; f < frames_; ++f) diagonals_[f][p] = static_cast<T>(m.values.data[p * frames_ + f]);
}

template <typename T>
std::size_t SensingMatrix<T>::nonzeros() const {
  return pixels_ * frames_;
}

template <typename T>
std::vector<T> SensingMatrix<T>::apply(std::span<const T> x) const {
  if (x.size() != cols()) throw ShapeError("SensingMatrix::apply: length mismatch");
  std::vector<T> y(pixels_, T{0});
  for (std::size_t f = 0; f < frames_; ++f) {
    const T* xf = x.data() + f * pixels_;
    for (std::size_t p = 0; p < pixels_; ++p) y[p] += diagonals_[f][p] * xf[p];
  }
  return y;
}

template <typename T>
std::vector<T> SensingMatrix<T>::apply_transpose(std::span<const T> y) const {
  if (y.size() != rows()) throw ShapeError("SensingMatrix::apply_transpose: length mismatch");
  std::vector<T> x(cols());
  for (std::size_t f = 0; f < frames_; ++f)
    for (std::size_t p = 0; p < pixels_; ++p) x[f * pixels_ + p] = diagonals_[f][p] * y[p];
  return x;
}

template <typename T>
std::vector<T> SensingMatrix<T>::to_dense() const {
  std::vector<T> d(rows() * cols(), T{0});
  for (std::size_t f = 0; f < frames_; ++f)
    for (std::size_t p = 0; p < pixels_; ++p) d[p * cols() + f * pixels_ + p] = diagonals_[f][p];
  return d;
}

template <typename T>
std::vector<T> vec_stack(const VideoCube<T>& x) {
  if (x.channels() != 1) throw ShapeError("vec_stack: single-channel cube expected");
  const std::size_t pixels = x.nx() * x.ny();
  std::vector<T> v(pixels * x.length());
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t f = 0; f < x.length(); ++f) v[f * pixels + p] = x.frames.data[p * x.length() + f];
  return v;
}

template <typename T>
VideoCube<T> bayer_mosaic(const VideoCube<T>& rgb) {
  if (rgb.channels() != 3) throw ShapeError("bayer_mosaic: expects 3 colour channels");
  require_even("bayer_mosaic", rgb.nx(), rgb.ny());
  VideoCube<T> out(NdArray<T>({rgb.nx(), rgb.ny(), 1, rgb.length()}));
  for (std::size_t i = 0; i < rgb.nx(); ++i)
    for (std::size_t j = 0; j < rgb.ny(); ++j) {
      // RGGB: row parity + column parity selects R (0), G (1) or B (2).
      const std::size_t channel = (i % 2) + (j % 2);
      for (std::size_t f = 0; f < rgb.length(); ++f) out.frames.data[out.offset(i, j, 0, f)] = rgb.at(i, j, channel, f);
    }
  return out;
}

namespace {

// Sub-lattice origins in r, g1, g2, b order.
constexpr std::size_t kOrigin[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};

template <typename A, typename F>
BayerParts<A> make_parts(F&& make) {
  return {make(0), make(1), make(2), make(3)};
}

template <typename A>
const A& part(const BayerParts<A>& p, int k) {
  switch (k) {
    case 0: return p.r;
    case 1: return p.g1;
    case 2: return p.g2;
    default: return p.b;
  }
}

}  // namespace

template <typename T>
BayerParts<Measurement<T>> bayer_split(const Measurement<T>& y) {
  require_even("bayer_split", y.nx(), y.ny());
  const std::size_t hx = y.nx() / 2, hy = y.ny() / 2;
  return make_parts<Measurement<T>>([&](int k) {
    Measurement<T> q;
    q.values = NdArray<T>({hx, hy});
    q.noise_sigma = y.noise_sigma;
    q.bayer = y.bayer;
    for (std::size_t i = 0; i < hx; ++i)
      for (std::size_t j = 0; j < hy; ++j) q.values.data[i * hy + j] = y.at(2 * i + kOrigin[k][0], 2 * j + kOrigin[k][1]);
    return q;
  });
}

BayerParts<MaskCube> bayer_split(const MaskCube& m) {
  require_even("bayer_split", m.nx(), m.ny());
  const std::size_t hx = m.nx() / 2, hy = m.ny() / 2, b = m.frames();
  return make_parts<MaskCube>([&](int k) {
    NdArray<std::uint8_t> v({hx, hy, b});
    for (std::size_t i = 0; i < hx; ++i)
      for (std::size_t j = 0; j < hy; ++j)
        for (std::size_t f = 0; f < b; ++f) v.data[(i * hy + j) * b + f] = m.at(2 * i + kOrigin[k][0], 2 * j + kOrigin[k][1], f);
    return MaskCube(std::move(v), m.seed);
  });
}

template <typename T>
BayerParts<VideoCube<T>> bayer_split(const VideoCube<T>& x) {
  if (x.channels() != 1) throw ShapeError("bayer_split: single-channel (raw) cube expected");
  require_even("bayer_split", x.nx(), x.ny());
  const std::size_t hx = x.nx() / 2, hy = x.ny() / 2, b = x.length();
  return make_parts<VideoCube<T>>([&](int k) {
    VideoCube<T> q(NdArray<T>({hx, hy, 1, b}));
    for (std::size_t i = 0; i < hx; ++i)
      for (std::size_t j = 0; j < hy; ++j)
        for (std::size_t f = 0; f < b; ++f)
          q.frames.data[q.offset(i, j, 0, f)] = x.at(2 * i + kOrigin[k][0], 2 * j + kOrigin[k][1], 0, f);
    return q;
  });
}

template <typename T>
Measurement<T> bayer_reassemble(const BayerParts<Measurement<T>>& parts) {
  const std::size_t hx = parts.r.nx(), hy = parts.r.ny();
  for (int k = 1; k < 4; ++k) {
    if (part(parts, k).values.dims != parts.r.values.dims) throw ShapeError("bayer_reassemble: part extents differ");
  }
  Measurement<T> y;
  y.values = NdArray<T>({2 * hx, 2 * hy});
  y.noise_sigma = parts.r.noise_sigma;
  y.bayer = parts.r.bayer;
  for (int k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < hx; ++i)
      for (std::size_t j = 0; j < hy; ++j)
        y.values.data[(2 * i + kOrigin[k][0]) * 2 * hy + 2 * j + kOrigin[k][1]] = part(parts, k).at(i, j);
  return y;
}

MaskCube bayer_reassemble(const BayerParts<MaskCube>& parts) {
  const std::size_t hx = parts.r.nx(), hy = parts.r.ny(), b = parts.r.frames();
  for (int k = 1; k < 4; ++k) {
    if (part(parts, k).values.dims != parts.r.values.dims) throw ShapeError("bayer_reassemble: part extents differ");
  }
  NdArray<std::uint8_t> v({2 * hx, 2 * hy, b});
  for (int k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < hx; ++i)
      for (std::size_t j = 0; j < hy; ++j)
        for (std::size_t f = 0; f < b; ++f)
          v.data[((2 * i + kOrigin[k][0]) * 2 * hy + 2 * j + kOrigin[k][1]) * b + f] = part(parts, k).at(i, j, f);
  return MaskCube(std::move(v), parts.r.seed);
}

namespace {

// Writes the single-lattice estimate into channel `channel` of `out`.
template <typename T>
void estimate_into(const Measurement<T>& y, const MaskCube& m, VideoCube<T>& out, std::size_t channel) {
  if (y.nx() != m.nx() || y.ny() != m.ny()) {
    throw ShapeError("init_estimate: measurement " + shape_str(y.values.dims) + " vs masks " +
                     shape_str(m.values.dims));
  }
  const std::size_t b = m.frames();
  for (std::size_t i = 0; i < m.nx(); ++i)
    for (std::size_t j = 0; j < m.ny(); ++j) {
      double mask_sum = 0;
      for (std::size_t f = 0; f < b; ++f) mask_sum += m.at(i, j, f);
      const double normalised = static_cast<double>(y.at(i, j)) / (mask_sum + kInitEpsilon);
      for (std::size_t f = 0; f < b; ++f) {
        out.frames.data[out.offset(i, j, channel, f)] = static_cast<T>(m.at(i, j, f) * normalised);
      }
    }
}

}  // namespace

template <typename T>
VideoCube<T> init_estimate(const Measurement<T>& y, const MaskCube& m) {
  if (!y.bayer) {
    VideoCube<T> out(NdArray<T>({m.nx(), m.ny(), 1, m.frames()}));
    estimate_into(y, m, out, 0);
    return out;
  }
  if (y.nx() != m.nx() || y.ny() != m.ny()) throw ShapeError("init_estimate: measurement/mask extents differ");
  const auto ys = bayer_split(y);
  const auto ms = bayer_split(m);
  VideoCube<T> out(NdArray<T>({m.nx() / 2, m.ny() / 2, 4, m.frames()}));
  for (int k = 0; k < 4; ++k) estimate_into(part(ys, k), part(ms, k), out, static_cast<std::size_t>(k));
  return out;
}

#define STF_INSTANTIATE_SCI(T)                                                     \
  template struct VideoCube<T>;                                                    \
  template class SensingMatrix<T>;                                                 \
  template VideoCube<T> modulate(const VideoCube<T>&, const MaskCube&);            \
  template Measurement<T> integrate(const VideoCube<T>&, double, std::uint64_t);   \
  template std::vector<T> vec_stack(const VideoCube<T>&);                          \
  template VideoCube<T> bayer_mosaic(const VideoCube<T>&);                         \
  template BayerParts<Measurement<T>> bayer_split(const Measurement<T>&);          \
  template BayerParts<VideoCube<T>> bayer_split(const VideoCube<T>&);              \
  template Measurement<T> bayer_reassemble(const BayerParts<Measurement<T>>&);     \
  template VideoCube<T> init_estimate(const Measurement<T>&, const MaskCube&);

STF_INSTANTIATE_SCI(float)
STF_INSTANTIATE_SCI(double)

}  // namespace stf::sci
