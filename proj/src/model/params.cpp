#include "stformer/model/params.hpp"

#include "stformer/core/rng.hpp"
#include "stformer/tensor/init.hpp"

namespace stf::model {

std::array<std::size_t, 6> token_gen_channels(const ModelConfig& c) {
  const std::size_t C = c.channels;
  return {c.in_channels, C / 4, C / 4, C / 2, C / 2, C};
}

namespace {

enum class Kind { projection, conv_weight, bias, table, gamma, beta };

// Visits every tensor slot of `p` in the canonical order.
template <typename P, typename F>
void visit(P& p, F&& f) {
  for (std::size_t i = 0; i < p.token_gen.size(); ++i) {
    const std::string pre = "tg." + std::to_string(i);
    f(pre + ".weight", p.token_gen[i].weight, Kind::conv_weight);
    f(pre + ".bias", p.token_gen[i].bias, Kind::bias);
  }
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    auto& blk = p.blocks[b];
    const std::string pre = "blocks." + std::to_string(b);
    f(pre + ".norm1.gamma", blk.norm1_gamma, Kind::gamma);
    f(pre + ".norm1.beta", blk.norm1_beta, Kind::beta);
    f(pre + ".ssa.wq", blk.ssa.wq, Kind::projection);
    f(pre + ".ssa.wk", blk.ssa.wk, Kind::projection);
    f(pre + ".ssa.wv", blk.ssa.wv, Kind::projection);
    f(pre + ".ssa.wp", blk.ssa.wp, Kind::projection);
    f(pre + ".ssa.bias_table", blk.ssa.bias_table, Kind::table);
    f(pre + ".tsa.wq", blk.tsa.wq, Kind::projection);
    f(pre + ".tsa.wk", blk.tsa.wk, Kind::projection);
    f(pre + ".tsa.wv", blk.tsa.wv, Kind::projection);
    f(pre + ".tsa.wp", blk.tsa.wp, Kind::projection);
    f(pre + ".tsa.bias_table", blk.tsa.bias_table, Kind::table);
    f(pre + ".norm2.gamma", blk.norm2_gamma, Kind::gamma);
    f(pre + ".norm2.beta", blk.norm2_beta, Kind::beta);
    auto unit = [&](const std::string& u, auto& r) {
      f(u + ".conv1.weight", r.conv1.weight, Kind::conv_weight);
      f(u + ".conv1.bias", r.conv1.bias, Kind::bias);
      f(u + ".conv2.weight", r.conv2.weight, Kind::conv_weight);
      f(u + ".conv2.bias", r.conv2.bias, Kind::bias);
    };
    unit(pre + ".grff.res1", blk.grff.res1);
    unit(pre + ".grff.res2", blk.grff.res2);
  }
  f("vr.up.weight", p.vr_up.weight, Kind::conv_weight);
  f("vr.up.bias", p.vr_up.bias, Kind::bias);
  f("vr.conv1.weight", p.vr_conv1.weight, Kind::conv_weight);
  f("vr.conv1.bias", p.vr_conv1.bias, Kind::bias);
  f("vr.conv2.weight", p.vr_conv2.weight, Kind::conv_weight);
  f("vr.conv2.bias", p.vr_conv2.bias, Kind::bias);
}

template <typename T>
ConvParams<T> conv_slot(std::size_t kd, std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout) {
  return {Tensor<T>({kd, kh, kw, cin, cout}), Tensor<T>({cout})};
}

template <typename T>
ModelParams<T> allocate(const ModelConfig& c) {
  c.validate();
  const std::size_t C = c.channels, H = c.heads, half = C / 2;
  ModelParams<T> p;
  p.config = c;
  const auto ch = token_gen_channels(c);
  for (std::size_t i = 0; i < 5; ++i) p.token_gen[i] = conv_slot<T>(3, 3, 3, ch[i], ch[i + 1]);
  const std::size_t offsets = (2 * c.window_h - 1) * (2 * c.window_w - 1);
  for (std::size_t b = 0; b < c.num_blocks(); ++b) {
    BlockParams<T> blk;
    blk.norm1_gamma = Tensor<T>({C}, T{1});
    blk.norm1_beta = Tensor<T>({C});
    blk.ssa = {Tensor<T>({C, C}), Tensor<T>({C, C}), Tensor<T>({C, C}), Tensor<T>({C, C}),
               Tensor<T>({offsets, H})};
    blk.tsa = {Tensor<T>({C, half}), Tensor<T>({C, half}), Tensor<T>({C, half}), Tensor<T>({half, C}),
               Tensor<T>({2 * c.frames - 1, H})};
    blk.norm2_gamma = Tensor<T>({C}, T{1});
    blk.norm2_beta = Tensor<T>({C});
    blk.grff.res1 = {conv_slot<T>(3, 3, 3, half, half), conv_slot<T>(3, 3, 3, half, half)};
    blk.grff.res2 = {conv_slot<T>(3, 3, 3, half, half), conv_slot<T>(3, 3, 3, half, half)};
    p.blocks.push_back(std::move(blk));
  }
  // Transposed kernel [1,4,4,Cout_t,Cin_t]; bias lives on the Cout_t side.
  p.vr_up = {Tensor<T>({1, 4, 4, C, C}), Tensor<T>({C})};
  p.vr_conv1 = conv_slot<T>(3, 3, 3, C, half);
  p.vr_conv2 = conv_slot<T>(3, 3, 3, half, c.out_channels);
  return p;
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> ModelParams<T>::named() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  visit(*this, [&](const std::string& name, const Tensor<T>& t, Kind) { out.emplace_back(name, t); });
  return out;
}

template <typename T>
std::vector<Tensor<T>> ModelParams<T>::tensors() const {
  std::vector<Tensor<T>> out;
  visit(*this, [&](const std::string&, const Tensor<T>& t, Kind) { out.push_back(t); });
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  visit(*this, [&](const std::string&, const Tensor<T>& t, Kind) { n += t.numel(); });
  return n;
}

template <typename T>
ModelParams<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  ModelParams<T> p = allocate<T>(config);
  std::uint64_t stream = 0;
  visit(p, [&](const std::string&, Tensor<T>& t, Kind kind) {
    const std::uint64_t s = mix_seed(seed, stream++);
    switch (kind) {
      case Kind::projection:
        init_truncated_normal(t, 0.02, s);
        break;
      case Kind::conv_weight: {
        // The transposed kernel reads its Cin_t from the last dim; a plain conv from dim 3.
        const auto& d = t.dims();
        const bool transposed = &t == &p.vr_up.weight;
        const std::size_t fan_in = d[0] * d[1] * d[2] * (transposed ? d[4] : d[3]);
        init_fan_in_uniform(t, fan_in, s);
        break;
      }
      case Kind::bias:
      case Kind::table:
      case Kind::gamma:
      case Kind::beta:
        break;  // allocated at their initial values
    }
  });
  return p;
}

template <typename T>
ModelParams<T> zero_model(const ModelConfig& config) {
  return allocate<T>(config);
}

template <typename To, typename From>
ModelParams<To> convert_params(const ModelParams<From>& p) {
  ModelParams<To> out = allocate<To>(p.config);
  auto src = p.named();
  std::size_t i = 0;
  visit(out, [&](const std::string&, Tensor<To>& t, Kind) {
    auto v = src[i++].second.values();
    std::copy(v.begin(), v.end(), t.mutable_values().begin());
  });
  return out;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> build_model(const ModelConfig&, std::uint64_t);
template ModelParams<double> build_model(const ModelConfig&, std::uint64_t);
template ModelParams<float> zero_model(const ModelConfig&);
template ModelParams<double> zero_model(const ModelConfig&);
template ModelParams<float> convert_params(const ModelParams<double>&);
template ModelParams<double> convert_params(const ModelParams<float>&);
template ModelParams<float> convert_params(const ModelParams<float>&);
template ModelParams<double> convert_params(const ModelParams<double>&);

}  // namespace stf::model
