#pragma once

// Coded-aperture temporal imaging encoder: per-frame binary mask modulation,
// temporal integration onto one sensor frame, its sparse sensing-matrix form,
// the RGGB Bayer pathway, and the mask-normalised coarse estimate that seeds
// the reconstruction network.
//
// Layouts (row-major):
//   MaskCube     [nx, ny, B]          u8 in {0,1}
//   VideoCube    [nx, ny, C_ch, B]    C_ch = 1 (gray) or 3 (RGB), or 4 for Bayer estimates
//   Measurement  [nx, ny]
// vec() flattens an nx x ny frame row-major; vec-stacked video is
// [vec(X_1); ...; vec(X_B)].

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "stformer/core/ndarray.hpp"

namespace stf::sci {

struct MaskCube {
  NdArray<std::uint8_t> values;
  std::uint64_t seed = 0;

  MaskCube() = default;
  /// Validates rank 3, positive extents and binary entries.
  explicit MaskCube(NdArray<std::uint8_t> v, std::uint64_t seed = 0);

  std::size_t nx() const { return values.dims[0]; }
  std::size_t ny() const { return values.dims[1]; }
  std::size_t frames() const { return values.dims[2]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t f) const {
    return values.data[(x * ny() + y) * frames() + f];
  }
};

template <typename T>
struct VideoCube {
  NdArray<T> frames;

  VideoCube() = default;
  explicit VideoCube(NdArray<T> f);

  std::size_t nx() const { return frames.dims[0]; }
  std::size_t ny() const { return frames.dims[1]; }
  std::size_t channels() const { return frames.dims[2]; }
  std::size_t length() const { return frames.dims[3]; }
  std::size_t offset(std::size_t x, std::size_t y, std::size_t c, std::size_t f) const {
    return ((x * ny() + y) * channels() + c) * length() + f;
  }
  T at(std::size_t x, std::size_t y, std::size_t c, std::size_t f) const { return frames.data[offset(x, y, c, f)]; }
};

enum class BayerPattern { rggb };

template <typename T>
struct Measurement {
  NdArray<T> values;  // [nx, ny]
  double noise_sigma = 0.0;
  std::optional<BayerPattern> bayer;

  std::size_t nx() const { return values.dims[0]; }
  std::size_t ny() const { return values.dims[1]; }
  T at(std::size_t x, std::size_t y) const { return values.data[x * ny() + y]; }
};

/// I.i.d. Bernoulli(p) masks from a seeded PRNG; the same seed gives the same cube.
MaskCube gen_masks(std::size_t nx, std::size_t ny, std::size_t frames, std::uint64_t seed, double p = 0.5);

/// X'(:,:,f) = X(:,:,f) .* M(:,:,f); every channel at a pixel shares the mask.
template <typename T>
VideoCube<T> modulate(const VideoCube<T>& x, const MaskCube& m);

/// Y = sum_f X'(:,:,f) + Z with Z ~ N(0, sigma^2) i.i.d. Grayscale input only.
template <typename T>
Measurement<T> integrate(const VideoCube<T>& x_mod, double sigma = 0.0, std::uint64_t seed = 0);

/// H = [D_1, ..., D_B], D_f = Diag(vec(M_f)), stored as B diagonals.
template <typename T>
class SensingMatrix {
 public:
  explicit SensingMatrix(const MaskCube& m);

  std::size_t rows() const { return pixels_; }
  std::size_t cols() const { return pixels_ * frames_; }
  std::size_t nonzeros() const;

  /// y = H x for vec-stacked x of length nx*ny*B.
  std::vector<T> apply(std::span<const T> x) const;
  /// x = H^T y.
  std::vector<T> apply_transpose(std::span<const T> y) const;
  /// Dense row-major rows() x cols() copy; small instances only.
  std::vector<T> to_dense() const;

  const std::vector<T>& diagonal(std::size_t f) const { return diagonals_.at(f); }

 private:
  std::size_t pixels_;
  std::size_t frames_;
  std::vector<std::vector<T>> diagonals_;
};

template <typename T>
SensingMatrix<T> build_sensing_matrix(const MaskCube& m) {
  return SensingMatrix<T>(m);
}

/// Vec-stacks the frames of a single-channel cube: [vec(X_1); ...; vec(X_B)].
template <typename T>
std::vector<T> vec_stack(const VideoCube<T>& x);

/// RGB cube -> single-channel raw cube sampled on the RGGB lattice:
/// (2i,2j) R, (2i,2j+1) G, (2i+1,2j) G, (2i+1,2j+1) B.
template <typename T>
VideoCube<T> bayer_mosaic(const VideoCube<T>& rgb);

template <typename A>
struct BayerParts {
  A r, g1, g2, b;
};

template <typename T>
BayerParts<Measurement<T>> bayer_split(const Measurement<T>& y);
BayerParts<MaskCube> bayer_split(const MaskCube& m);
/// Single-channel cube split into the four quarter-resolution sub-lattices.
template <typename T>
BayerParts<VideoCube<T>> bayer_split(const VideoCube<T>& x);

template <typename T>
Measurement<T> bayer_reassemble(const BayerParts<Measurement<T>>& parts);
MaskCube bayer_reassemble(const BayerParts<MaskCube>& parts);

/// Coarse estimate X^(:,:,f) = M_f .* (Y ./ (sum_f M_f + 1e-8)).
/// Grayscale: [nx, ny, 1, B]. Bayer measurements: the estimate is formed per
/// RGGB sub-lattice and the four results become channels, [nx/2, ny/2, 4, B].
template <typename T>
VideoCube<T> init_estimate(const Measurement<T>& y, const MaskCube& m);

inline constexpr double kInitEpsilon = 1e-8;

}  // namespace stf::sci
