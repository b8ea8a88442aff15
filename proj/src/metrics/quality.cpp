#include "stformer/metrics/quality.hpp"

#include <cmath>
#include <string>

#include "stformer/core/error.hpp"

namespace stf::metrics {

double psnr(std::span<const double> a, std::span<const double> b, double peak) {
  if (a.size() != b.size()) {
    throw ShapeError("psnr: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " samples");
  }
  if (a.empty()) throw ShapeError("psnr: empty input");
  if (!(peak > 0)) throw std::invalid_argument("psnr: peak must be positive");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
  }
  if (se == 0) return kPsnrIdentical;
  return 10.0 * std::log10(peak * peak / (se / static_cast<double>(a.size())));
}

namespace {

std::vector<double> gaussian_taps(std::size_t n, double sigma) {
  std::vector<double> w(n);
  const double c = (static_cast<double>(n) - 1) / 2;
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) - c;
    w[i] = std::exp(-x * x / (2 * sigma * sigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Separable valid-mode filtering of a plane; output (H-n+1) x (W-n+1).
std::vector<double> filter_valid(const std::vector<double>& x, std::size_t H, std::size_t W,
                                 const std::vector<double>& taps) {
  const std::size_t n = taps.size(), oh = H - n + 1, ow = W - n + 1;
  std::vector<double> rows(H * ow);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0;
      for (std::size_t k = 0; k < n; ++k) acc += taps[k] * x[r * W + c + k];
      rows[r * ow + c] = acc;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0;
      for (std::size_t k = 0; k < n; ++k) acc += taps[k] * rows[(r + k) * ow + c];
      out[r * ow + c] = acc;
    }
  return out;
}

}  // namespace

double ssim(std::span<const double> a, std::span<const double> b, std::size_t height, std::size_t width,
            double peak, const SsimOptions& opt) {
  if (a.size() != height * width || b.size() != height * width) {
    throw ShapeError("ssim: planes do not match " + std::to_string(height) + "x" + std::to_string(width));
  }
  if (height < opt.window || width < opt.window) {
    throw ShapeError("ssim: " + std::to_string(height) + "x" + std::to_string(width) + " image is smaller than the " +
                     std::to_string(opt.window) + "x" + std::to_string(opt.window) + " window");
  }
  if (!(peak > 0)) throw std::invalid_argument("ssim: peak must be positive");
  const auto taps = gaussian_taps(opt.window, opt.sigma);
  const std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, height, width, taps), my = filter_valid(y, height, width, taps);
  const auto mxx = filter_valid(xx, height, width, taps), myy = filter_valid(yy, height, width, taps);
  const auto mxy = filter_valid(xy, height, width, taps);
  const double c1 = (opt.k1 * peak) * (opt.k1 * peak), c2 = (opt.k2 * peak) * (opt.k2 * peak);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i], vy = myy[i] - my[i] * my[i], vxy = mxy[i] - mx[i] * my[i];
    const double num = (2 * mx[i] * my[i] + c1) * (2 * vxy + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

namespace {

template <typename T>
std::vector<double> plane(const sci::VideoCube<T>& v, std::size_t f, std::size_t ch) {
  std::vector<double> out(v.nx() * v.ny());
  for (std::size_t x = 0; x < v.nx(); ++x)
    for (std::size_t y = 0; y < v.ny(); ++y) out[x * v.ny() + y] = static_cast<double>(v.at(x, y, ch, f));
  return out;
}

template <typename T>
std::vector<double> luma(const sci::VideoCube<T>& v, std::size_t f) {
  const auto r = plane(v, f, 0), g = plane(v, f, 1), b = plane(v, f, 2);
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

template <typename T>
QualityReport eval_dataset(const sci::VideoCube<T>& recon, const sci::VideoCube<T>& truth, const EvalOptions& opt) {
  if (recon.frames.dims != truth.frames.dims) {
    throw ShapeError("eval: reconstruction " + shape_str(recon.frames.dims) + " vs truth " +
                     shape_str(truth.frames.dims));
  }
  const std::size_t C = truth.channels(), F = truth.length(), nx = truth.nx(), ny = truth.ny();
  if (C != 1 && C != 3) throw ShapeError("eval: expected 1 or 3 channels, got " + std::to_string(C));
  if (F == 0) throw ShapeError("eval: no frames");
  QualityReport rep;
  for (std::size_t f = 0; f < F; ++f) {
    std::vector<double> ra, ta;
    for (std::size_t ch = 0; ch < C; ++ch) {
      const auto rp = plane(recon, f, ch), tp = plane(truth, f, ch);
      ra.insert(ra.end(), rp.begin(), rp.end());
      ta.insert(ta.end(), tp.begin(), tp.end());
    }
    rep.psnr_db.push_back(psnr(ra, ta, opt.peak));
    if (C == 1) {
      rep.ssim.push_back(ssim(plane(recon, f, 0), plane(truth, f, 0), nx, ny, opt.peak));
    } else if (opt.color == ColorSsim::luma) {
      rep.ssim.push_back(ssim(luma(recon, f), luma(truth, f), nx, ny, opt.peak));
    } else {
      double s = 0;
      for (std::size_t ch = 0; ch < 3; ++ch) s += ssim(plane(recon, f, ch), plane(truth, f, ch), nx, ny, opt.peak);
      rep.ssim.push_back(s / 3);
    }
  }
  rep.mean_psnr_db = mean_of(rep.psnr_db);
  rep.mean_ssim = mean_of(rep.ssim);
  return rep;
}

namespace {

nlohmann::json encode_db(double v) { return std::isinf(v) ? nlohmann::json("inf") : nlohmann::json(v); }

double decode_db(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return kPsnrIdentical;
    throw std::invalid_argument("quality report: unexpected PSNR string '" + j.get<std::string>() + "'");
  }
  return j.get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const QualityReport& r) {
  nlohmann::json db = nlohmann::json::array();
  for (double v : r.psnr_db) db.push_back(encode_db(v));
  j = nlohmann::json{{"psnr_db", db},
                     {"ssim", r.ssim},
                     {"mean_psnr_db", encode_db(r.mean_psnr_db)},
                     {"mean_ssim", r.mean_ssim}};
}

void from_json(const nlohmann::json& j, QualityReport& r) {
  r.psnr_db.clear();
  for (const auto& v : j.at("psnr_db")) r.psnr_db.push_back(decode_db(v));
  r.ssim = j.at("ssim").get<std::vector<double>>();
  r.mean_psnr_db = decode_db(j.at("mean_psnr_db"));
  r.mean_ssim = j.at("mean_ssim").get<double>();
}

template QualityReport eval_dataset(const sci::VideoCube<float>&, const sci::VideoCube<float>&, const EvalOptions&);
template QualityReport eval_dataset(const sci::VideoCube<double>&, const sci::VideoCube<double>&,
                                    const EvalOptions&);

}  // namespace stf::metrics
