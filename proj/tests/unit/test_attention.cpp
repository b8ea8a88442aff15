#include <cmath>
#include <random>

#include "doctest.h"
#include "stformer/model/attention.hpp"
#include "stformer/tensor/grad_check.hpp"
#include "stformer/tensor/tape.hpp"
#include "test_util.hpp"

using namespace stf;
using namespace stf::model;
using stf::test::random_tensor;

namespace {

// Bare config for hand-sized attention; validate() is deliberately not called.
ModelConfig tiny_config(std::size_t C, std::size_t heads, std::size_t gh, std::size_t gw, std::size_t frames) {
  ModelConfig c;
  c.channels = C;
  c.heads = heads;
  c.window_h = gh;
  c.window_w = gw;
  c.frames = frames;
  return c;
}

Tensor<double> mat(Shape dims, std::vector<double> v) { return Tensor<double>(std::move(dims), std::move(v)); }

double dot2(const double* a, const double* b) { return a[0] * b[0] + a[1] * b[1]; }

// Row-vector times 2x2 row-major matrix.
void vm2(const double* x, const std::vector<double>& w, double* out) {
  out[0] = x[0] * w[0] + x[1] * w[2];
  out[1] = x[0] * w[1] + x[1] * w[3];
}

SpatialAttentionParams<double> random_ssa(const ModelConfig& c, std::mt19937_64& rng, double table_scale = 0.0) {
  SpatialAttentionParams<double> p;
  p.wq = random_tensor<double>({c.channels, c.channels}, rng, -0.5, 0.5);
  p.wk = random_tensor<double>({c.channels, c.channels}, rng, -0.5, 0.5);
  p.wv = random_tensor<double>({c.channels, c.channels}, rng, -0.5, 0.5);
  p.wp = random_tensor<double>({c.channels, c.channels}, rng, -0.5, 0.5);
  p.bias_table = random_tensor<double>({(2 * c.window_h - 1) * (2 * c.window_w - 1), c.heads}, rng, -table_scale,
                                       table_scale);
  return p;
}

TemporalAttentionParams<double> random_tsa(const ModelConfig& c, std::mt19937_64& rng) {
  const std::size_t h = c.channels / 2;
  TemporalAttentionParams<double> p;
  p.wq = random_tensor<double>({c.channels, h}, rng, -0.5, 0.5);
  p.wk = random_tensor<double>({c.channels, h}, rng, -0.5, 0.5);
  p.wv = random_tensor<double>({c.channels, h}, rng, -0.5, 0.5);
  p.wp = random_tensor<double>({h, c.channels}, rng, -0.5, 0.5);
  p.bias_table = random_tensor<double>({2 * c.frames - 1, c.heads}, rng, -0.3, 0.3);
  return p;
}

}  // namespace

TEST_CASE("window geometry and partition counts") {
  const auto g = WindowGeometry::make(14, 14, 7, 7);
  CHECK(g.windows() == 4);
  CHECK(g.tokens() == 49);
  CHECK_FALSE(g.padded());

  std::mt19937_64 rng(1);
  const Tensor<double> f1 = random_tensor<double>({1, 1, 14, 14, 3}, rng);
  const Tensor<double> f2 = random_tensor<double>({1, 2, 14, 14, 3}, rng);
  CHECK(window_partition(f1, g).dims() == Shape{4, 49, 3});
  CHECK(window_partition(f2, g).dims() == Shape{8, 49, 3});

  const auto padded = WindowGeometry::make(10, 15, 7, 7, 3, 3);
  CHECK(padded.padded_h == 14);
  CHECK(padded.padded_w == 21);
  CHECK(padded.windows() == 6);
  CHECK_THROWS_AS(WindowGeometry::make(14, 14, 7, 7, 7, 0), ShapeError);
  CHECK_THROWS_AS(WindowGeometry::make(0, 14, 7, 7), ShapeError);
}

TEST_CASE("unshifted partition groups contiguous blocks") {
  // 4x4 plane, 2x2 windows: window 1 holds rows 0-1, cols 2-3.
  std::vector<double> v(16);
  for (std::size_t i = 0; i < 16; ++i) v[i] = double(i);
  const Tensor<double> f({1, 1, 4, 4, 1}, v);
  const auto w = window_partition(f, WindowGeometry::make(4, 4, 2, 2));
  CHECK(test::to_vec(w.values()) == std::vector<double>{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15});
  // Shift (1,1) rolls by (-1,-1) first: window 0 starts at original (1,1).
  const auto s = window_partition(f, WindowGeometry::make(4, 4, 2, 2, 1, 1));
  CHECK(test::to_vec(s.values()).front() == 5.0);
  CHECK(s.values()[1] == 6.0);
  CHECK(s.values()[2] == 9.0);
  CHECK(s.values()[3] == 10.0);
}

TEST_CASE("window round trip is bit exact for shift 0 and (3,3)") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> ext(1, 23), small(1, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t N = small(rng), D = small(rng), H = ext(rng), W = ext(rng), C = small(rng);
    const Tensor<double> f = random_tensor<double>({N, D, H, W, C}, rng);
    for (std::size_t s : {std::size_t{0}, std::size_t{3}}) {
      const auto g = WindowGeometry::make(H, W, 7, 7, s, s);
      const auto back = window_reverse(window_partition(f, g), g, N, D);
      REQUIRE(back.dims() == f.dims());
      CHECK(test::to_vec(back.values()) == test::to_vec(f.values()));
    }
  }
}

TEST_CASE("shifted mask admits exactly the pairs that were neighbours before the roll") {
  const auto g = WindowGeometry::make(14, 21, 7, 7, 3, 3);
  const auto mask = window_attention_mask(g, 2);
  REQUIRE(mask);
  CHECK(mask->dims == Shape{6, 2, 49, 49});
  std::size_t blocked = 0;
  for (std::size_t w = 0; w < g.windows(); ++w)
    for (std::size_t a = 0; a < 49; ++a)
      for (std::size_t b = 0; b < 49; ++b) {
        const auto sa = g.source(w, a), sb = g.source(w, b);
        const long dr_rolled = long(a / 7) - long(b / 7), dc_rolled = long(a % 7) - long(b % 7);
        const long dr_orig = sa / 21 - sb / 21, dc_orig = sa % 21 - sb % 21;
        const bool neighbours = dr_rolled == dr_orig && dc_rolled == dc_orig;
        for (std::size_t h = 0; h < 2; ++h) {
          const bool allowed = mask->allowed[((w * 2 + h) * 49 + a) * 49 + b];
          CHECK(allowed == neighbours);
          blocked += !allowed;
        }
      }
  CHECK(blocked > 0);
  CHECK_FALSE(window_attention_mask(WindowGeometry::make(14, 14, 7, 7), 2));
}

TEST_CASE("padding tokens are never attended to") {
  const auto g = WindowGeometry::make(9, 5, 7, 7);
  const auto mask = window_attention_mask(g, 1);
  REQUIRE(mask);
  for (std::size_t w = 0; w < g.windows(); ++w)
    for (std::size_t a = 0; a < 49; ++a)
      for (std::size_t b = 0; b < 49; ++b) {
        CHECK(bool(mask->allowed[(w * 49 + a) * 49 + b]) == (g.source(w, b) >= 0));
      }
}

TEST_CASE("relative bias indices") {
  const auto idx = spatial_bias_index(2, 2, 1);
  // Table has (2*2-1)^2 = 9 offsets; identical tokens map to the centre.
  for (std::size_t a = 0; a < 4; ++a) CHECK((*idx)[a * 4 + a] == 4);
  CHECK((*idx)[0 * 4 + 3] == 0);  // query (0,0), key (1,1): offset (-1,-1)
  CHECK((*idx)[3 * 4 + 0] == 8);  // offset (+1,+1)
  const auto t = temporal_bias_index(3, 2);
  CHECK((*t)[(1 * 3 + 0) * 3 + 2] == 0 * 2 + 1);  // head 1, a=0, b=2 -> offset -2
  CHECK((*t)[(0 * 3 + 2) * 3 + 0] == 4 * 2 + 0);  // head 0, a=2, b=0 -> offset +2
}

TEST_CASE("SSA hand-arithmetic oracle, one window of two tokens") {
  const ModelConfig c = tiny_config(2, 1, 1, 2, 1);
  const std::vector<double> x{0.3, -0.7, 1.1, 0.4};
  const std::vector<double> wq{0.5, -0.2, 0.1, 0.8}, wk{-0.3, 0.6, 0.9, 0.2}, wv{0.7, 0.1, -0.4, 0.5},
      wp{1.2, -0.6, 0.3, 0.9};
  const std::vector<double> table{0.1, 0.2, 0.3};  // offsets dc = -1, 0, +1
  SpatialAttentionParams<double> p{mat({2, 2}, wq), mat({2, 2}, wk), mat({2, 2}, wv), mat({2, 2}, wp),
                                   mat({3, 1}, table)};
  const auto out = slw_msa(Tensor<double>({1, 1, 1, 2, 2}, x), p, c, false);

  double q[2][2], k[2][2], v[2][2];
  for (int t = 0; t < 2; ++t) {
    vm2(&x[2 * t], wq, q[t]);
    vm2(&x[2 * t], wk, k[t]);
    vm2(&x[2 * t], wv, v[t]);
  }
  for (int a = 0; a < 2; ++a) {
    double s[2];
    for (int b = 0; b < 2; ++b) s[b] = dot2(q[a], k[b]) / std::sqrt(2.0) + table[a - b + 1];
    const double e0 = std::exp(s[0]), e1 = std::exp(s[1]);
    const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
    const double o[2] = {p0 * v[0][0] + p1 * v[1][0], p0 * v[0][1] + p1 * v[1][1]};
    double y[2];
    vm2(o, wp, y);
    CHECK(std::abs(out.values()[2 * a] - y[0]) < 1e-12);
    CHECK(std::abs(out.values()[2 * a + 1] - y[1]) < 1e-12);
  }
}

TEST_CASE("TSA hand-arithmetic oracle, D=2") {
  const ModelConfig c = tiny_config(2, 1, 1, 1, 2);
  // field [1, D=2, 1, 1, 2]
  const std::vector<double> x{0.9, -0.2, -0.5, 0.6};
  const std::vector<double> wq{0.4, -0.8}, wk{0.3, 0.5}, wv{-0.6, 0.2}, wp{1.5, -0.7};
  const std::vector<double> table{-0.2, 0.0, 0.25};  // offsets a-b = -1, 0, +1
  TemporalAttentionParams<double> p{mat({2, 1}, wq), mat({2, 1}, wk), mat({2, 1}, wv), mat({1, 2}, wp),
                                    mat({3, 1}, table)};
  const auto out = tw_msa(Tensor<double>({1, 2, 1, 1, 2}, x), p, c);
  double q[2], k[2], v[2];
  for (int t = 0; t < 2; ++t) {
    q[t] = x[2 * t] * wq[0] + x[2 * t + 1] * wq[1];
    k[t] = x[2 * t] * wk[0] + x[2 * t + 1] * wk[1];
    v[t] = x[2 * t] * wv[0] + x[2 * t + 1] * wv[1];
  }
  for (int a = 0; a < 2; ++a) {
    const double s0 = q[a] * k[0] + table[a - 0 + 1], s1 = q[a] * k[1] + table[a - 1 + 1];
    const double p0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
    const double o = p0 * v[0] + (1 - p0) * v[1];
    CHECK(std::abs(out.values()[2 * a] - o * wp[0]) < 1e-12);
    CHECK(std::abs(out.values()[2 * a + 1] - o * wp[1]) < 1e-12);
  }
}

TEST_CASE("identical tokens in a window give x Wv Wp") {
  const ModelConfig c = tiny_config(4, 2, 2, 2, 1);
  std::mt19937_64 rng(3);
  auto p = random_ssa(c, rng);
  const std::vector<double> token{0.2, -0.4, 0.9, 0.1};
  std::vector<double> v;
  for (int i = 0; i < 4; ++i) v.insert(v.end(), token.begin(), token.end());
  const auto out = slw_msa(Tensor<double>({1, 1, 2, 2, 4}, v), p, c, false);
  const auto expect = matmul(matmul(Tensor<double>({1, 4}, token), p.wv), p.wp);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t ch = 0; ch < 4; ++ch) CHECK(std::abs(out.values()[t * 4 + ch] - expect.values()[ch]) < 1e-12);
}

TEST_CASE("TSA with D=1 reduces to x Wv Wp") {
  const ModelConfig c = tiny_config(4, 2, 7, 7, 1);
  std::mt19937_64 rng(4);
  auto p = random_tsa(c, rng);
  const auto x = random_tensor<double>({1, 1, 3, 2, 4}, rng);
  const auto out = tw_msa(x, p, c);
  const auto expect = matmul(matmul(reshape(x, {6, 4}), p.wv), p.wp);
  CHECK(test::max_abs_diff(out.values(), expect.values()) < 1e-12);
}

TEST_CASE("SSA is translation equivariant by a window pitch") {
  const ModelConfig c = tiny_config(4, 2, 3, 3, 2);
  std::mt19937_64 rng(5);
  auto p = random_ssa(c, rng);
  const std::size_t H = 6, W = 9, C = 4;
  const auto x = random_tensor<double>({1, 2, H, W, C}, rng);
  // Cyclic translation by one window pitch in both axes.
  std::vector<double> shifted(x.numel());
  auto at = [&](std::size_t d, std::size_t r, std::size_t col, std::size_t ch) {
    return ((d * H + r) * W + col) * C + ch;
  };
  for (std::size_t d = 0; d < 2; ++d)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t col = 0; col < W; ++col)
        for (std::size_t ch = 0; ch < C; ++ch) {
          shifted[at(d, (r + 3) % H, (col + 3) % W, ch)] = x.values()[at(d, r, col, ch)];
        }
  const auto y = slw_msa(x, p, c, false);
  const auto ys = slw_msa(Tensor<double>(x.dims(), shifted), p, c, false);
  for (std::size_t d = 0; d < 2; ++d)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t col = 0; col < W; ++col)
        for (std::size_t ch = 0; ch < C; ++ch) {
          CHECK(ys.values()[at(d, (r + 3) % H, (col + 3) % W, ch)] == y.values()[at(d, r, col, ch)]);
        }
}

TEST_CASE("TSA changes only the site that changed") {
  const ModelConfig c = tiny_config(8, 2, 7, 7, 4);
  std::mt19937_64 rng(6);
  auto p = random_tsa(c, rng);
  const std::size_t D = 4, H = 3, W = 5, C = 8;
  const auto x = random_tensor<double>({1, D, H, W, C}, rng);
  auto z = x.clone();
  const std::size_t r0 = 1, c0 = 2;
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t ch = 0; ch < C; ++ch) z.mutable_values()[((d * H + r0) * W + c0) * C + ch] = 0.0;
  const auto y = tw_msa(x, p, c), yz = tw_msa(z, p, c);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t col = 0; col < W; ++col) {
        bool differs = false;
        for (std::size_t ch = 0; ch < C; ++ch) {
          const std::size_t i = ((d * H + r) * W + col) * C + ch;
          differs = differs || y.values()[i] != yz.values()[i];
        }
        CHECK(differs == (r == r0 && col == c0));
      }
  // Two sites with identical sequences produce identical outputs.
  auto twin = x.clone();
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t ch = 0; ch < C; ++ch) {
      twin.mutable_values()[((d * H + 2) * W + 4) * C + ch] = twin.values()[((d * H + 0) * W + 0) * C + ch];
    }
  const auto yt = tw_msa(twin, p, c);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t ch = 0; ch < C; ++ch) {
      CHECK(yt.values()[((d * H + 2) * W + 4) * C + ch] == yt.values()[((d * H + 0) * W + 0) * C + ch]);
    }
}

TEST_CASE("attention rows sum to one") {
  std::mt19937_64 rng(8);
  const ModelConfig c = tiny_config(8, 2, 3, 3, 3);
  auto ps = random_ssa(c, rng, 0.5);
  auto pt = random_tsa(c, rng);
  const auto x = random_tensor<double>({2, 3, 6, 6, 8}, rng);
  AttentionTrace<double> trace;
  slw_msa(x, ps, c, false, &trace);
  slw_msa(x, ps, c, true, &trace);
  tw_msa(x, pt, c, &trace);
  REQUIRE(trace.probabilities.size() == 3);
  for (const auto& prob : trace.probabilities) {
    const std::size_t L = prob.dim(prob.rank() - 1);
    for (std::size_t row = 0; row < prob.numel() / L; ++row) {
      double s = 0;
      for (std::size_t j = 0; j < L; ++j) s += prob.values()[row * L + j];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("TSA rejects a different temporal length") {
  const ModelConfig c = tiny_config(8, 2, 7, 7, 4);
  std::mt19937_64 rng(9);
  auto p = random_tsa(c, rng);
  CHECK_THROWS_AS(tw_msa(random_tensor<double>({1, 3, 2, 2, 8}, rng), p, c), ConfigError);
  CHECK_THROWS_AS(tw_msa(random_tensor<double>({1, 4, 2, 2, 6}, rng), p, c), ShapeError);
}

TEST_CASE("attention gradients match central differences") {
  std::mt19937_64 rng(10);
  const ModelConfig c = tiny_config(4, 2, 2, 2, 3);
  auto ps = random_ssa(c, rng, 0.2);
  auto pt = random_tsa(c, rng);
  const auto x = random_tensor<double>({1, 3, 3, 4, 4}, rng);
  const auto w = random_tensor<double>({1, 3, 3, 4, 4}, rng);
  GradCheckOptions<double> opt;
  opt.h = 1e-6;
  const auto r1 = grad_check<double>([&] { return sum(mul(slw_msa(x, ps, c, true), w)); },
                                     {x, ps.wq, ps.wk, ps.wv, ps.wp, ps.bias_table}, opt);
  CHECK(r1.max_rel_error < 1e-6);
  const auto r2 = grad_check<double>([&] { return sum(mul(tw_msa(x, pt, c), w)); },
                                     {x, pt.wq, pt.wk, pt.wv, pt.wp, pt.bias_table}, opt);
  CHECK(r2.max_rel_error < 1e-6);
}
