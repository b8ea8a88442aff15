#pragma once

#include <limits>
#include <span>
#include <vector>

#include "json.hpp"
#include "stformer/sci/forward_model.hpp"

namespace stf::metrics {

/// Returned by psnr when the images are identical.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE) over equally sized sample sets.
double psnr(std::span<const double> a, std::span<const double> b, double peak);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Single-scale SSIM of two row-major height x width planes: Gaussian
/// weighted local statistics, averaged over positions where the window fits.
double ssim(std::span<const double> a, std::span<const double> b, std::size_t height, std::size_t width, double peak,
            const SsimOptions& opt = {});

enum class ColorSsim { luma, per_channel };

struct EvalOptions {
  double peak = 1.0;
  ColorSsim color = ColorSsim::luma;
};

struct QualityReport {
  std::vector<double> psnr_db;
  std::vector<double> ssim;
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;

  bool operator==(const QualityReport&) const = default;
};

/// Per-frame PSNR (all channels) and SSIM (luma or channel mean for RGB).
template <typename T>
QualityReport eval_dataset(const sci::VideoCube<T>& recon, const sci::VideoCube<T>& truth,
                           const EvalOptions& opt = {});

/// +inf PSNR values are written as the string "inf".
void to_json(nlohmann::json& j, const QualityReport& r);
void from_json(const nlohmann::json& j, QualityReport& r);

}  // namespace stf::metrics
