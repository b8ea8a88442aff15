#include <random>

#include "doctest.h"
#include "stformer/sci/forward_model.hpp"

using namespace stf;
using namespace stf::sci;

namespace {

VideoCube<double> random_video(std::size_t nx, std::size_t ny, std::size_t c, std::size_t b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  NdArray<double> a({nx, ny, c, b});
  for (auto& v : a.data) v = u(rng);
  return VideoCube<double>(std::move(a));
}

MaskCube constant_masks(std::size_t nx, std::size_t ny, std::size_t b, std::uint8_t v) {
  return MaskCube(NdArray<std::uint8_t>({nx, ny, b}, v));
}

}  // namespace

TEST_CASE("gen_masks determinism and law") {
  CHECK(gen_masks(2, 2, 1, 7).values == gen_masks(2, 2, 1, 7).values);
  CHECK(gen_masks(16, 16, 2, 7).values != gen_masks(16, 16, 2, 8).values);

  MaskCube big = gen_masks(256, 256, 8, 123);
  double mean = 0;
  for (auto b : big.values.data) mean += b;
  mean /= static_cast<double>(big.values.numel());
  CHECK(std::abs(mean - 0.5) < 0.01);

  MaskCube dense = gen_masks(32, 32, 4, 5, 0.999);
  std::size_t ones = 0;
  for (auto b : dense.values.data) ones += b;
  CHECK(ones >= dense.values.numel() - 20);

  CHECK_THROWS_AS(gen_masks(2, 2, 1, 1, 1.0), ContractError);
  CHECK_THROWS_AS(gen_masks(0, 2, 1, 1), ShapeError);
  CHECK_THROWS_AS(MaskCube(NdArray<std::uint8_t>({2, 2, 1}, 2)), ShapeError);
}

TEST_CASE("modulate") {
  std::mt19937_64 rng(1);
  auto x = random_video(4, 4, 1, 2, rng);
  CHECK(modulate(x, constant_masks(4, 4, 2, 1)).frames == x.frames);
  for (double v : modulate(x, constant_masks(4, 4, 2, 0)).frames.data) CHECK(v == 0.0);

  MaskCube m = gen_masks(4, 4, 2, 9);
  auto xm = modulate(x, m);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t f = 0; f < 2; ++f) CHECK(xm.at(i, j, 0, f) == x.at(i, j, 0, f) * m.at(i, j, f));

  auto rgb = random_video(4, 4, 3, 2, rng);
  auto rgbm = modulate(rgb, m);
  for (std::size_t c = 0; c < 3; ++c) CHECK(rgbm.at(1, 2, c, 1) == rgb.at(1, 2, c, 1) * m.at(1, 2, 1));

  CHECK_THROWS_AS(modulate(x, gen_masks(4, 4, 3, 1)), ShapeError);
}

TEST_CASE("complementary masks partition the video") {
  std::mt19937_64 rng(2);
  auto x = random_video(5, 3, 1, 4, rng);
  MaskCube m = gen_masks(5, 3, 4, 77);
  NdArray<std::uint8_t> inv = m.values;
  for (auto& b : inv.data) b = 1 - b;
  auto a = modulate(x, m);
  auto b = modulate(x, MaskCube(inv));
  for (std::size_t i = 0; i < x.frames.numel(); ++i) CHECK(a.frames.data[i] + b.frames.data[i] == x.frames.data[i]);
}

TEST_CASE("integrate") {
  VideoCube<double> ones(NdArray<double>({3, 2, 1, 2}, 1.0));
  for (double v : integrate(ones).values.data) CHECK(v == 2.0);

  std::mt19937_64 rng(3);
  auto single = random_video(3, 3, 1, 1, rng);
  CHECK(integrate(single).values.data == single.frames.data);

  auto x = random_video(4, 5, 1, 3, rng);
  auto y = integrate(x);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(y.at(i, j) == x.at(i, j, 0, 0) + x.at(i, j, 0, 1) + x.at(i, j, 0, 2));

  auto noisy1 = integrate(x, 0.1, 5), noisy2 = integrate(x, 0.1, 5);
  CHECK(noisy1.values == noisy2.values);
  CHECK(noisy1.values != y.values);
  CHECK_THROWS_AS(integrate(random_video(2, 2, 3, 1, rng)), ShapeError);
}

TEST_CASE("integrate is linear at sigma 0") {
  std::mt19937_64 rng(4);
  auto x = random_video(3, 4, 1, 3, rng), z = random_video(3, 4, 1, 3, rng);
  const double a = 0.75, b = -1.25;
  VideoCube<double> comb = x;
  for (std::size_t i = 0; i < comb.frames.numel(); ++i) comb.frames.data[i] = a * x.frames.data[i] + b * z.frames.data[i];
  auto lhs = integrate(comb), yx = integrate(x), yz = integrate(z);
  for (std::size_t i = 0; i < lhs.values.numel(); ++i)
    CHECK(lhs.values.data[i] == doctest::Approx(a * yx.values.data[i] + b * yz.values.data[i]).epsilon(1e-14));
}

TEST_CASE("sensing matrix") {
  NdArray<std::uint8_t> mv({1, 1, 2}, std::vector<std::uint8_t>{1, 0});
  SensingMatrix<double> h(MaskCube{mv});
  CHECK(h.rows() == 1);
  CHECK(h.cols() == 2);
  CHECK(h.to_dense() == std::vector<double>{1, 0});
  std::vector<double> x2{3.0, 4.0};
  CHECK(h.apply(x2) == std::vector<double>{3.0});

  std::mt19937_64 rng(5);
  auto x = random_video(3, 3, 1, 4, rng);
  SensingMatrix<double> all(constant_masks(3, 3, 4, 1));
  auto y = all.apply(vec_stack(x));
  for (std::size_t p = 0; p < 9; ++p) {
    double s = 0;
    for (std::size_t f = 0; f < 4; ++f) s += x.frames.data[p * 4 + f];
    CHECK(y[p] == doctest::Approx(s).epsilon(1e-15));
  }
  CHECK(all.nonzeros() == 36);

  // H^T is the adjoint of H.
  MaskCube m = gen_masks(3, 3, 4, 6);
  SensingMatrix<double> hm(m);
  std::vector<double> w(9);
  for (auto& v : w) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  auto hx = hm.apply(vec_stack(x));
  auto htw = hm.apply_transpose(w);
  auto xs = vec_stack(x);
  double l = 0, r = 0;
  for (std::size_t i = 0; i < 9; ++i) l += hx[i] * w[i];
  for (std::size_t i = 0; i < 36; ++i) r += xs[i] * htw[i];
  CHECK(std::abs(l - r) < 1e-12);
}

TEST_CASE("property: vectorised and direct forward models agree") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<std::size_t> ext(1, 8), fr(1, 4);
    const std::size_t nx = ext(rng), ny = ext(rng), b = fr(rng);
    auto x = random_video(nx, ny, 1, b, rng);
    MaskCube m = gen_masks(nx, ny, b, rng());
    auto direct = integrate(modulate(x, m));
    auto hx = build_sensing_matrix<double>(m).apply(vec_stack(x));
    double err = 0;
    for (std::size_t p = 0; p < nx * ny; ++p) err = std::max(err, std::abs(hx[p] - direct.values.data[p]));
    CHECK(err < 1e-12);
  }
}

TEST_CASE("bayer mosaic layout") {
  NdArray<double> red({4, 4, 3, 1}, 0.0);
  for (std::size_t p = 0; p < 16; ++p) red.data[p * 3] = 1.0;
  auto raw = bayer_mosaic(VideoCube<double>(red));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(raw.at(i, j, 0, 0) == ((i % 2 == 0 && j % 2 == 0) ? 1.0 : 0.0));

  auto white = bayer_mosaic(VideoCube<double>(NdArray<double>({2, 4, 3, 2}, 0.625)));
  for (double v : white.frames.data) CHECK(v == 0.625);

  std::mt19937_64 rng(7);
  auto rgb = random_video(4, 4, 3, 2, rng);
  auto m = bayer_mosaic(rgb);
  const std::size_t lookup[2][2] = {{0, 1}, {1, 2}};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t f = 0; f < 2; ++f) CHECK(m.at(i, j, 0, f) == rgb.at(i, j, lookup[i % 2][j % 2], f));

  CHECK_THROWS_AS(bayer_mosaic(random_video(3, 4, 3, 1, rng)), ShapeError);
  CHECK_THROWS_AS(bayer_mosaic(random_video(4, 4, 1, 1, rng)), ShapeError);
}

TEST_CASE("bayer split and reassemble") {
  Measurement<double> y;
  y.values = NdArray<double>({2, 2}, std::vector<double>{1, 2, 3, 4});
  auto parts = bayer_split(y);
  CHECK(parts.r.values.data == std::vector<double>{1});
  CHECK(parts.g1.values.data == std::vector<double>{2});
  CHECK(parts.g2.values.data == std::vector<double>{3});
  CHECK(parts.b.values.data == std::vector<double>{4});

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> half(1, 6);
    Measurement<double> m;
    m.values = NdArray<double>({2 * half(rng), 2 * half(rng)});
    for (auto& v : m.values.data) v = std::uniform_real_distribution<double>(0, 8)(rng);
    CHECK(bayer_reassemble(bayer_split(m)).values == m.values);
  }
  MaskCube masks = gen_masks(6, 4, 3, 10);
  CHECK(bayer_reassemble(bayer_split(masks)).values == masks.values);

  Measurement<double> odd;
  odd.values = NdArray<double>({3, 2});
  CHECK_THROWS_AS(bayer_split(odd), ShapeError);
}

TEST_CASE("per-channel Bayer forward model matches the sub-lattice loop") {
  std::mt19937_64 rng(9);
  auto rgb = random_video(8, 6, 3, 4, rng);
  MaskCube m = gen_masks(8, 6, 4, 11);
  auto y = integrate(modulate(bayer_mosaic(rgb), m));
  auto ys = bayer_split(y);
  auto ms = bayer_split(m);
  const std::size_t origin[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const std::size_t colour[4] = {0, 1, 1, 2};
  const Measurement<double>* yp[4] = {&ys.r, &ys.g1, &ys.g2, &ys.b};
  const MaskCube* mp[4] = {&ms.r, &ms.g1, &ms.g2, &ms.b};
  for (int k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double acc = 0;
        for (std::size_t f = 0; f < 4; ++f)
          acc += rgb.at(2 * i + origin[k][0], 2 * j + origin[k][1], colour[k], f) * mp[k]->at(i, j, f);
        CHECK(std::abs(yp[k]->at(i, j) - acc) < 1e-12);
      }
}

TEST_CASE("init_estimate") {
  std::mt19937_64 rng(12);
  Measurement<double> y;
  y.values = NdArray<double>({2, 3}, std::vector<double>{4, 8, 2, 6, 1, 0});
  auto est = init_estimate(y, constant_masks(2, 3, 4, 1));
  CHECK(est.frames.dims == Shape{2, 3, 1, 4});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t f = 0; f < 4; ++f)
        CHECK(est.at(i, j, 0, f) == doctest::Approx(y.at(i, j) / 4).epsilon(1e-8));

  NdArray<std::uint8_t> mv({2, 2, 2}, 1);
  mv.data[(1 * 2 + 0) * 2 + 0] = 0;
  mv.data[(1 * 2 + 0) * 2 + 1] = 0;
  Measurement<double> y2;
  y2.values = NdArray<double>({2, 2}, 3.0);
  auto est2 = init_estimate(y2, MaskCube(mv));
  CHECK(est2.at(1, 0, 0, 0) == 0.0);
  CHECK(est2.at(1, 0, 0, 1) == 0.0);

  auto x = random_video(4, 4, 1, 2, rng);
  MaskCube m = gen_masks(4, 4, 2, 13);
  auto meas = integrate(modulate(x, m));
  auto e = init_estimate(meas, m);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double s = m.at(i, j, 0) + m.at(i, j, 1);
      for (std::size_t f = 0; f < 2; ++f) CHECK(e.at(i, j, 0, f) == doctest::Approx(m.at(i, j, f) * meas.at(i, j) / (s + 1e-8)));
    }
  CHECK_THROWS_AS(init_estimate(meas, gen_masks(4, 2, 2, 1)), ShapeError);
}

TEST_CASE("init_estimate on Bayer measurements yields four half-resolution channels") {
  std::mt19937_64 rng(14);
  auto rgb = random_video(8, 8, 3, 4, rng);
  MaskCube m = gen_masks(8, 8, 4, 15);
  auto y = integrate(modulate(bayer_mosaic(rgb), m));
  y.bayer = BayerPattern::rggb;
  auto e = init_estimate(y, m);
  CHECK(e.frames.dims == Shape{4, 4, 4, 4});
  auto gparts = bayer_split(y);
  auto mparts = bayer_split(m);
  Measurement<double> plain_g2 = gparts.g2;
  plain_g2.bayer.reset();
  auto e_g2 = init_estimate(plain_g2, mparts.g2);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t f = 0; f < 4; ++f) CHECK(e.at(i, j, 2, f) == e_g2.at(i, j, 0, f));
}
