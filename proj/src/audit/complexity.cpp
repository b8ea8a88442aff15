#include "stformer/audit/complexity.hpp"

#include <initializer_list>
#include <random>
#include <stdexcept>

#include "stformer/core/error.hpp"
#include "stformer/model/attention.hpp"
#include "stformer/model/params.hpp"
#include "stformer/tensor/mac_counter.hpp"
#include "stformer/tensor/tape.hpp"

namespace stf::audit {

namespace {

void require_positive(const char* op, std::initializer_list<std::uint64_t> dims) {
  for (auto d : dims) {
    if (d == 0) throw ShapeError(std::string(op) + ": every dimension must be positive");
  }
}

std::uint64_t mul(std::initializer_list<std::uint64_t> xs) {
  std::uint64_t r = 1;
  for (auto x : xs) {
    if (__builtin_mul_overflow(r, x, &r)) throw std::overflow_error("MAC count exceeds 64 bits");
  }
  return r;
}

std::uint64_t plus(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("MAC count exceeds 64 bits");
  return r;
}

}  // namespace

std::uint64_t flops_slw(std::uint64_t H, std::uint64_t W, std::uint64_t D, std::uint64_t C, std::uint64_t Gh,
                        std::uint64_t Gw) {
  require_positive("flops_slw", {H, W, D, C, Gh, Gw});
  return plus(mul({4, H, W, D, C, C}), mul({2, Gh, Gw, H, W, D, C}));
}

std::uint64_t flops_tw(std::uint64_t H, std::uint64_t W, std::uint64_t D, std::uint64_t C) {
  require_positive("flops_tw", {H, W, D, C});
  return plus(mul({2, H, W, D, C, C}), mul({H, W, D, D, C}));
}

std::uint64_t flops_st(std::uint64_t H, std::uint64_t W, std::uint64_t D, std::uint64_t C, std::uint64_t Gh,
                       std::uint64_t Gw) {
  return plus(flops_slw(H, W, D, C, Gh, Gw), flops_tw(H, W, D, C));
}

std::uint64_t flops_gmsa(std::uint64_t H, std::uint64_t W, std::uint64_t D, std::uint64_t C) {
  require_positive("flops_gmsa", {H, W, D, C});
  const std::uint64_t n = mul({H, W, D});
  return plus(mul({4, n, C, C}), mul({2, n, n, C}));
}

namespace {

model::ModelConfig attention_config(const AttentionDims& d) {
  require_positive("count_macs", {d.H, d.W, d.D, d.C, d.Gh, d.Gw, d.heads});
  if (d.C % (2 * d.heads)) throw ConfigError("count_macs: C must be divisible by 2 * heads");
  model::ModelConfig c;
  c.channels = d.C;
  c.heads = d.heads;
  c.window_h = d.Gh;
  c.window_w = d.Gw;
  c.frames = d.D;
  return c;
}

Tensor<double> random_field(const AttentionDims& d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(d.D * d.H * d.W * d.C);
  for (auto& x : v) x = u(rng);
  return Tensor<double>({1, d.D, d.H, d.W, d.C}, std::move(v));
}

Tensor<double> random_matrix(Shape dims, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  std::vector<double> v(shape_numel(dims));
  for (auto& x : v) x = u(rng);
  return Tensor<double>(std::move(dims), std::move(v));
}

}  // namespace

std::uint64_t count_macs_slw(const AttentionDims& d, bool shifted) {
  const auto c = attention_config(d);
  std::mt19937_64 rng(1);
  model::SpatialAttentionParams<double> p{random_matrix({d.C, d.C}, rng), random_matrix({d.C, d.C}, rng),
                                          random_matrix({d.C, d.C}, rng), random_matrix({d.C, d.C}, rng),
                                          Tensor<double>({(2 * d.Gh - 1) * (2 * d.Gw - 1), d.heads})};
  const auto field = random_field(d, rng);
  Tape<double>::Pause pause;
  MacCounter counter;
  MacCounter::Scope scope(counter);
  model::slw_msa(field, p, c, shifted);
  return counter.total();
}

std::uint64_t count_macs_tw(const AttentionDims& d) {
  const auto c = attention_config(d);
  std::mt19937_64 rng(2);
  const std::size_t h = d.C / 2;
  model::TemporalAttentionParams<double> p{random_matrix({d.C, h}, rng), random_matrix({d.C, h}, rng),
                                           random_matrix({d.C, h}, rng), random_matrix({h, d.C}, rng),
                                           Tensor<double>({2 * d.D - 1, d.heads})};
  const auto field = random_field(d, rng);
  Tape<double>::Pause pause;
  MacCounter counter;
  MacCounter::Scope scope(counter);
  model::tw_msa(field, p, c);
  return counter.total();
}

CostBreakdown audit_attention(const AttentionDims& d) {
  CostBreakdown b;
  b.dims = d;
  b.analytic_slw = flops_slw(d.H, d.W, d.D, d.C, d.Gh, d.Gw);
  b.analytic_tw = flops_tw(d.H, d.W, d.D, d.C);
  b.analytic_st = flops_st(d.H, d.W, d.D, d.C, d.Gh, d.Gw);
  b.analytic_gmsa = flops_gmsa(d.H, d.W, d.D, d.C);
  b.measured_slw = count_macs_slw(d);
  b.measured_tw = count_macs_tw(d);
  return b;
}

NetworkCost network_cost(const model::ModelConfig& c, std::size_t nx, std::size_t ny) {
  c.validate();
  const std::size_t s = c.token_stride();
  if (nx == 0 || ny == 0 || nx % s || ny % s) {
    throw ShapeError("network_cost: input extents must be positive multiples of " + std::to_string(s));
  }
  const std::uint64_t D = c.frames, H = nx / s, W = ny / s, C = c.channels, half = C / 2;
  auto conv = [&](std::uint64_t taps, std::uint64_t cin, std::uint64_t cout, std::uint64_t h, std::uint64_t w) {
    return mul({D, h, w, taps, cin, cout});
  };
  NetworkCost n;
  const auto ch = model::token_gen_channels(c);
  for (std::size_t i = 0; i < 5; ++i) n.token_gen = plus(n.token_gen, conv(27, ch[i], ch[i + 1], H, W));
  for (std::size_t b = 0; b < c.num_blocks(); ++b) {
    n.attention = plus(n.attention, flops_st(H, W, D, C, c.window_h, c.window_w));
    n.grff = plus(n.grff, mul({4, conv(27, half, half, H, W)}));
  }
  // Transposed conv: each input position scatters a 4x4 kernel.
  n.reconstruct = plus(conv(16, C, C, H, W), plus(conv(27, C, half, 2 * H, 2 * W),
                                                  conv(27, half, c.out_channels, 2 * H, 2 * W)));
  n.total = plus(plus(n.token_gen, n.attention), plus(n.grff, n.reconstruct));
  n.parameters = model::zero_model<float>(c).parameter_count();
  return n;
}

void to_json(nlohmann::json& j, const AttentionDims& d) {
  j = {{"H", d.H}, {"W", d.W}, {"D", d.D}, {"C", d.C}, {"Gh", d.Gh}, {"Gw", d.Gw}, {"heads", d.heads}};
}

void to_json(nlohmann::json& j, const CostBreakdown& c) {
  j = {{"dims", c.dims},
       {"analytic_macs", {{"slw_msa", c.analytic_slw}, {"tw_msa", c.analytic_tw}, {"st_msa", c.analytic_st},
                          {"g_msa", c.analytic_gmsa}}},
       {"measured_macs", {{"slw_msa", c.measured_slw}, {"tw_msa", c.measured_tw}}}};
}

void to_json(nlohmann::json& j, const NetworkCost& c) {
  j = {{"token_gen_macs", c.token_gen}, {"attention_macs", c.attention}, {"grff_macs", c.grff},
       {"reconstruct_macs", c.reconstruct}, {"total_macs", c.total},   {"total_gmacs", double(c.total) / 1e9},
       {"parameters", c.parameters}};
}

}  // namespace stf::audit
