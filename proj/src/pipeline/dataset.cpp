#include "stformer/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "stformer/core/error.hpp"
#include "stformer/core/rng.hpp"
#include "stformer/model/network.hpp"

namespace stf::pipeline {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(std::istream& is, const std::string& path) {
  std::string tok;
  char ch;
  while (is.get(ch)) {
    if (ch == '#') {
      std::string line;
      std::getline(is, line);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(ch);
  }
  if (tok.empty()) throw IoError(path + ": truncated PNM header");
  return tok;
}

std::size_t pnm_number(std::istream& is, const std::string& path) {
  const std::string tok = pnm_token(is, path);
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError(path + ": bad PNM header field '" + tok + "'");
  }
}

}  // namespace

NdArray<double> read_pnm(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + p);
  const std::string magic = pnm_token(is, p);
  if (magic != "P5" && magic != "P6") throw IoError(p + ": only binary PGM (P5) and PPM (P6) are supported");
  const std::size_t channels = magic == "P5" ? 1 : 3;
  const std::size_t cols = pnm_number(is, p), rows = pnm_number(is, p), maxval = pnm_number(is, p);
  if (cols == 0 || rows == 0 || maxval == 0 || maxval > 65535) throw IoError(p + ": bad PNM geometry");
  // pnm_token consumed exactly one whitespace byte after maxval.
  const std::size_t bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(rows * cols * channels * bytes);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw IoError(p + ": truncated pixel data");
  }
  NdArray<double> out({rows, cols, channels});
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const unsigned v = bytes == 1 ? raw[i] : (unsigned(raw[2 * i]) << 8) | raw[2 * i + 1];
    out.data[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return out;
}

void write_pnm(const std::filesystem::path& path, const NdArray<double>& image) {
  if (image.dims.size() != 3 || (image.dims[2] != 1 && image.dims[2] != 3)) {
    throw ShapeError("write_pnm: expected [rows, cols, 1|3], got " + shape_str(image.dims));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << (image.dims[2] == 1 ? "P5" : "P6") << "\n" << image.dims[1] << " " << image.dims[0] << "\n255\n";
  for (double v : image.data) {
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

namespace {

template <typename T>
NdArray<T> to_float_cube(const AnyArray& a) {
  return std::visit(
      [](const auto& arr) -> NdArray<T> {
        using V = typename std::decay_t<decltype(arr)>::value_type;
        if constexpr (std::is_same_v<V, std::uint8_t>) {
          NdArray<T> out(arr.dims);
          for (std::size_t i = 0; i < arr.data.size(); ++i) out.data[i] = static_cast<T>(arr.data[i] / 255.0);
          return out;
        } else {
          return array_cast<T>(arr);
        }
      },
      a);
}

}  // namespace

template <typename T>
sci::VideoCube<T> load_video(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError(path.string() + ": no .pgm/.ppm frames");
    std::vector<NdArray<double>> frames;
    for (const auto& f : files) {
      frames.push_back(read_pnm(f));
      if (frames.back().dims != frames.front().dims) {
        throw ShapeError(f.string() + ": frame dims " + shape_str(frames.back().dims) + " differ from " +
                         shape_str(frames.front().dims));
      }
    }
    const std::size_t nx = frames[0].dims[0], ny = frames[0].dims[1], C = frames[0].dims[2], F = frames.size();
    NdArray<T> cube({nx, ny, C, F});
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t i = 0; i < nx * ny * C; ++i) cube.data[i * F + f] = static_cast<T>(frames[f].data[i]);
    return sci::VideoCube<T>(std::move(cube));
  }
  NdArray<T> a = to_float_cube<T>(load_stf1(path));
  if (a.dims.size() != 4) throw ShapeError(path.string() + ": expected a [nx, ny, C, T] cube, got " + shape_str(a.dims));
  return sci::VideoCube<T>(std::move(a));
}

template <typename T>
sci::VideoCube<T> synthetic_video(std::size_t nx, std::size_t ny, std::size_t channels, std::size_t frames,
                                  std::uint64_t seed) {
  if (nx == 0 || ny == 0 || channels == 0 || frames == 0) throw ShapeError("synthetic_video: empty extent");
  std::mt19937_64 rng(mix_seed(seed));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double X = static_cast<double>(nx), Y = static_cast<double>(ny);
  const double cx = X * (0.25 + 0.5 * u(rng)), cy = Y * (0.25 + 0.5 * u(rng));
  const double vx = (u(rng) - 0.5) * 0.2 * X, vy = (u(rng) - 0.5) * 0.2 * Y;
  const double kx = 0.15 + 0.2 * u(rng), ky = 0.1 + 0.2 * u(rng), phase = 6.28318 * u(rng);
  const double radius2 = 0.04 * X * Y;
  NdArray<T> out({nx, ny, channels, frames});
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t f = 0; f < frames; ++f) {
          const double fx = cx + vx * static_cast<double>(f) / static_cast<double>(frames);
          const double fy = cy + vy * static_cast<double>(f) / static_cast<double>(frames);
          const double dx = static_cast<double>(x) - fx, dy = static_cast<double>(y) - fy;
          const double blob = std::exp(-(dx * dx + dy * dy) / radius2);
          const double wave = 0.5 + 0.5 * std::sin(kx * static_cast<double>(x) + ky * static_cast<double>(y) + phase +
                                                   1.3 * static_cast<double>(c));
          out.data[((x * ny + y) * channels + c) * frames + f] = static_cast<T>(0.15 + 0.25 * wave + 0.55 * blob);
        }
  return sci::VideoCube<T>(std::move(out));
}

template <typename T>
std::vector<sci::VideoCube<T>> load_clips(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".stf1") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("dataset " + dir.string() + " holds no .stf1 cubes");
  std::vector<sci::VideoCube<T>> clips;
  for (const auto& f : files) clips.push_back(load_video<T>(f));
  return clips;
}

template <typename T>
sci::VideoCube<T> frame_range(const sci::VideoCube<T>& v, std::size_t first, std::size_t count) {
  if (first + count > v.length() || count == 0) {
    throw ShapeError("frame_range: frames [" + std::to_string(first) + ", " + std::to_string(first + count) +
                     ") of a " + std::to_string(v.length()) + "-frame cube");
  }
  NdArray<T> out({v.nx(), v.ny(), v.channels(), count});
  for (std::size_t x = 0; x < v.nx(); ++x)
    for (std::size_t y = 0; y < v.ny(); ++y)
      for (std::size_t c = 0; c < v.channels(); ++c)
        for (std::size_t f = 0; f < count; ++f) out.data[((x * v.ny() + y) * v.channels() + c) * count + f] =
            v.at(x, y, c, first + f);
  return sci::VideoCube<T>(std::move(out));
}

template <typename T>
sci::VideoCube<T> sample_clip(const sci::VideoCube<T>& clip, std::size_t spatial, std::size_t frames,
                              const Augment& aug, std::mt19937_64& rng) {
  if (clip.length() < frames) {
    throw ShapeError("sample_clip: clip has " + std::to_string(clip.length()) + " frames, need " +
                     std::to_string(frames));
  }
  const std::size_t nx = clip.nx(), ny = clip.ny(), C = clip.channels();
  // Source window side in clip pixels; the output is a bilinear resample of it.
  double side = static_cast<double>(spatial);
  if (aug.scale) side /= std::uniform_real_distribution<double>(aug.scale_min, aug.scale_max)(rng);
  side = std::min({side, static_cast<double>(nx), static_cast<double>(ny)});
  const bool flip = aug.hflip && std::bernoulli_distribution(0.5)(rng);
  double x0 = (static_cast<double>(nx) - side) / 2, y0 = (static_cast<double>(ny) - side) / 2;
  std::size_t t0 = 0;
  if (aug.crop) {
    x0 = std::uniform_real_distribution<double>(0, static_cast<double>(nx) - side)(rng);
    y0 = std::uniform_real_distribution<double>(0, static_cast<double>(ny) - side)(rng);
    t0 = std::uniform_int_distribution<std::size_t>(0, clip.length() - frames)(rng);
  }
  if (side == static_cast<double>(spatial)) {
    x0 = std::floor(x0);
    y0 = std::floor(y0);
  }
  const double step = side / static_cast<double>(spatial);
  NdArray<T> out({spatial, spatial, C, frames});
  for (std::size_t i = 0; i < spatial; ++i) {
    // Sample at pixel centres of the output grid.
    const double sx = std::clamp(x0 + (static_cast<double>(i) + 0.5) * step - 0.5, 0.0, static_cast<double>(nx - 1));
    const std::size_t xa = static_cast<std::size_t>(sx), xb = std::min(xa + 1, nx - 1);
    const double fx = sx - static_cast<double>(xa);
    for (std::size_t j = 0; j < spatial; ++j) {
      const std::size_t jj = flip ? spatial - 1 - j : j;
      const double sy =
          std::clamp(y0 + (static_cast<double>(jj) + 0.5) * step - 0.5, 0.0, static_cast<double>(ny - 1));
      const std::size_t ya = static_cast<std::size_t>(sy), yb = std::min(ya + 1, ny - 1);
      const double fy = sy - static_cast<double>(ya);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t f = 0; f < frames; ++f) {
          const std::size_t t = t0 + f;
          const double v = (1 - fx) * ((1 - fy) * clip.at(xa, ya, c, t) + fy * clip.at(xa, yb, c, t)) +
                           fx * ((1 - fy) * clip.at(xb, ya, c, t) + fy * clip.at(xb, yb, c, t));
          out.data[((i * spatial + j) * C + c) * frames + f] = static_cast<T>(v);
        }
    }
  }
  return sci::VideoCube<T>(std::move(out));
}

template <typename T>
sci::Measurement<T> simulate(const sci::VideoCube<T>& truth, const sci::MaskCube& mask, double noise_sigma,
                             std::uint64_t noise_seed) {
  if (truth.channels() == 3) {
    auto y = sci::integrate(sci::modulate(sci::bayer_mosaic(truth), mask), noise_sigma, noise_seed);
    y.bayer = sci::BayerPattern::rggb;
    return y;
  }
  return sci::integrate(sci::modulate(truth, mask), noise_sigma, noise_seed);
}

template <typename T>
Batch<T> make_batch(const std::vector<sci::VideoCube<T>>& truths, const sci::MaskCube& mask,
                    const model::ModelConfig& c, double noise_sigma, std::uint64_t noise_seed) {
  if (truths.empty()) throw ShapeError("make_batch: empty batch");
  if (truths[0].channels() != c.out_channels) {
    throw ShapeError("make_batch: ground truth has " + std::to_string(truths[0].channels()) +
                     " channels, the model outputs " + std::to_string(c.out_channels));
  }
  std::vector<T> in, tg;
  Shape in_dims, tg_dims;
  for (std::size_t n = 0; n < truths.size(); ++n) {
    const auto y = simulate(truths[n], mask, noise_sigma, noise_seed + n);
    const auto x = model::network_input(y, mask, c);
    const auto t = model::cube_to_tensor(truths[n]);
    if (n == 0) {
      in_dims = x.dims();
      tg_dims = t.dims();
    } else if (x.dims() != in_dims || t.dims() != tg_dims) {
      throw ShapeError("make_batch: samples differ in shape");
    }
    in.insert(in.end(), x.values().begin(), x.values().end());
    tg.insert(tg.end(), t.values().begin(), t.values().end());
  }
  in_dims[0] = tg_dims[0] = truths.size();
  return {Tensor<T>(in_dims, std::move(in)), Tensor<T>(tg_dims, std::move(tg))};
}

#define STF_INSTANTIATE_DATA(T)                                                                                 \
  template sci::VideoCube<T> load_video<T>(const std::filesystem::path&);                                       \
  template sci::VideoCube<T> synthetic_video<T>(std::size_t, std::size_t, std::size_t, std::size_t, std::uint64_t); \
  template std::vector<sci::VideoCube<T>> load_clips<T>(const std::filesystem::path&);                          \
  template sci::VideoCube<T> frame_range(const sci::VideoCube<T>&, std::size_t, std::size_t);                   \
  template sci::VideoCube<T> sample_clip(const sci::VideoCube<T>&, std::size_t, std::size_t, const Augment&,    \
                                         std::mt19937_64&);                                                     \
  template sci::Measurement<T> simulate(const sci::VideoCube<T>&, const sci::MaskCube&, double, std::uint64_t); \
  template Batch<T> make_batch(const std::vector<sci::VideoCube<T>>&, const sci::MaskCube&,                     \
                               const model::ModelConfig&, double, std::uint64_t);

STF_INSTANTIATE_DATA(float)
STF_INSTANTIATE_DATA(double)

}  // namespace stf::pipeline
