#include "stformer/model/attention.hpp"

#include <cmath>
#include <string>

namespace stf::model {

WindowGeometry WindowGeometry::make(std::size_t height, std::size_t width, std::size_t window_h,
                                    std::size_t window_w, std::size_t shift_h, std::size_t shift_w) {
  if (height == 0 || width == 0 || window_h == 0 || window_w == 0) {
    throw ShapeError("window geometry: extents and window must be positive");
  }
  if (shift_h >= window_h || shift_w >= window_w) throw ShapeError("window geometry: shift must be < window");
  WindowGeometry g;
  g.height = height;
  g.width = width;
  g.window_h = window_h;
  g.window_w = window_w;
  g.shift_h = shift_h;
  g.shift_w = shift_w;
  g.padded_h = (height + window_h - 1) / window_h * window_h;
  g.padded_w = (width + window_w - 1) / window_w * window_w;
  return g;
}

std::int64_t WindowGeometry::source(std::size_t w, std::size_t j) const {
  const std::size_t r = (w / windows_w()) * window_h + j / window_w;
  const std::size_t c = (w % windows_w()) * window_w + j % window_w;
  // Rolled coordinate r reads padded coordinate (r + shift) mod padded extent.
  const std::size_t pr = (r + shift_h) % padded_h;
  const std::size_t pc = (c + shift_w) % padded_w;
  if (pr >= height || pc >= width) return -1;
  return static_cast<std::int64_t>(pr * width + pc);
}

template <typename T>
Tensor<T> window_partition(const Tensor<T>& field, const WindowGeometry& g) {
  if (field.rank() != 5 || field.dim(2) != g.height || field.dim(3) != g.width) {
    throw ShapeError("window_partition: field " + shape_str(field.dims()) + " does not match window geometry");
  }
  const std::size_t slabs = field.dim(0) * field.dim(1), C = field.dim(4);
  const std::size_t plane = g.height * g.width, nw = g.windows(), J = g.tokens();
  auto index = std::make_shared<std::vector<std::int64_t>>(slabs * nw * J * C);
  std::size_t o = 0;
  for (std::size_t s = 0; s < slabs; ++s)
    for (std::size_t w = 0; w < nw; ++w)
      for (std::size_t j = 0; j < J; ++j) {
        const std::int64_t src = g.source(w, j);
        for (std::size_t c = 0; c < C; ++c) {
          (*index)[o++] = src < 0 ? -1 : static_cast<std::int64_t>((s * plane + static_cast<std::size_t>(src)) * C + c);
        }
      }
  return gather(field, {slabs * nw, J, C}, std::move(index));
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, const WindowGeometry& g, std::size_t batch, std::size_t depth) {
  const std::size_t slabs = batch * depth, nw = g.windows(), J = g.tokens();
  if (windows.rank() != 3 || windows.dim(0) != slabs * nw || windows.dim(1) != J) {
    throw ShapeError("window_reverse: windows " + shape_str(windows.dims()) + " do not match window geometry");
  }
  const std::size_t C = windows.dim(2), plane = g.height * g.width;
  auto index = std::make_shared<std::vector<std::int64_t>>(slabs * plane * C, -1);
  for (std::size_t s = 0; s < slabs; ++s)
    for (std::size_t w = 0; w < nw; ++w)
      for (std::size_t j = 0; j < J; ++j) {
        const std::int64_t src = g.source(w, j);
        if (src < 0) continue;
        for (std::size_t c = 0; c < C; ++c) {
          (*index)[(s * plane + static_cast<std::size_t>(src)) * C + c] =
              static_cast<std::int64_t>(((s * nw + w) * J + j) * C + c);
        }
      }
  return gather(windows, {batch, depth, g.height, g.width, C}, std::move(index));
}

std::shared_ptr<const SoftmaxMask> window_attention_mask(const WindowGeometry& g, std::size_t heads) {
  if (!g.padded() && !g.shifted()) return nullptr;
  const std::size_t nw = g.windows(), J = g.tokens();
  // Region label of a rolled coordinate: 0 for the untouched span, 1 for the
  // span that was padded into place, 2 for the wrapped-around span.
  auto region = [](std::size_t r, std::size_t padded, std::size_t window, std::size_t shift) -> std::size_t {
    if (shift == 0 || r < padded - window) return 0;
    return r < padded - shift ? 1 : 2;
  };
  auto mask = std::make_shared<SoftmaxMask>();
  mask->dims = {nw, heads, J, J};
  mask->allowed.assign(nw * heads * J * J, 0);
  std::vector<std::size_t> label(J);
  std::vector<bool> real(J);
  for (std::size_t w = 0; w < nw; ++w) {
    for (std::size_t j = 0; j < J; ++j) {
      const std::size_t r = (w / g.windows_w()) * g.window_h + j / g.window_w;
      const std::size_t c = (w % g.windows_w()) * g.window_w + j % g.window_w;
      label[j] = region(r, g.padded_h, g.window_h, g.shift_h) * 3 + region(c, g.padded_w, g.window_w, g.shift_w);
      real[j] = g.source(w, j) >= 0;
    }
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t a = 0; a < J; ++a)
        for (std::size_t b = 0; b < J; ++b) {
          mask->allowed[((w * heads + h) * J + a) * J + b] = real[b] && label[a] == label[b];
        }
  }
  return mask;
}

std::shared_ptr<const std::vector<std::int64_t>> spatial_bias_index(std::size_t gh, std::size_t gw,
                                                                    std::size_t heads) {
  const std::size_t J = gh * gw;
  auto index = std::make_shared<std::vector<std::int64_t>>(heads * J * J);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t a = 0; a < J; ++a)
      for (std::size_t b = 0; b < J; ++b) {
        const std::size_t dr = a / gw + gh - 1 - b / gw;
        const std::size_t dc = a % gw + gw - 1 - b % gw;
        const std::size_t offset = dr * (2 * gw - 1) + dc;
        (*index)[(h * J + a) * J + b] = static_cast<std::int64_t>(offset * heads + h);
      }
  return index;
}

std::shared_ptr<const std::vector<std::int64_t>> temporal_bias_index(std::size_t depth, std::size_t heads) {
  auto index = std::make_shared<std::vector<std::int64_t>>(heads * depth * depth);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t a = 0; a < depth; ++a)
      for (std::size_t b = 0; b < depth; ++b) {
        (*index)[(h * depth + a) * depth + b] = static_cast<std::int64_t>((a + depth - 1 - b) * heads + h);
      }
  return index;
}

namespace {

// [M, L, C] -> [M, heads, L, C / heads]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& t, std::size_t heads) {
  const std::size_t M = t.dim(0), L = t.dim(1), C = t.dim(2);
  return permute(reshape(t, {M, L, heads, C / heads}), {0, 2, 1, 3});
}

// [M, heads, L, d] -> [M, L, heads * d]
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& t) {
  const std::size_t M = t.dim(0), heads = t.dim(1), L = t.dim(2), d = t.dim(3);
  return reshape(permute(t, {0, 2, 1, 3}), {M, L, heads * d});
}

// Multi-head scaled dot-product attention on token groups x: [M, L, C_in].
template <typename T>
Tensor<T> grouped_attention(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk, const Tensor<T>& wv,
                            const Tensor<T>& wp, const Tensor<T>& bias, std::size_t heads,
                            std::shared_ptr<const SoftmaxMask> mask, AttentionTrace<T>* trace) {
  const Tensor<T> q = split_heads(matmul(x, wq), heads);
  const Tensor<T> k = split_heads(matmul(x, wk), heads);
  const Tensor<T> v = split_heads(matmul(x, wv), heads);
  const std::size_t dh = q.dim(3);
  Tensor<T> logits = mul(matmul(q, permute(k, {0, 1, 3, 2})), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
  logits = add(logits, bias);
  Tensor<T> attn = mask ? masked_softmax_lastdim(logits, std::move(mask)) : softmax_lastdim(logits);
  if (trace) trace->probabilities.push_back(attn);
  return matmul(merge_heads(matmul(attn, v)), wp);
}

void require_field(const char* op, const Shape& d, std::size_t C) {
  if (d.size() != 5 || d[4] != C) {
    throw ShapeError(std::string(op) + ": expected [N, D, H, W, " + std::to_string(C) + "] field, got " + shape_str(d));
  }
}

}  // namespace

template <typename T>
Tensor<T> slw_msa(const Tensor<T>& field, const SpatialAttentionParams<T>& p, const ModelConfig& c, bool shifted,
                  AttentionTrace<T>* trace) {
  require_field("slw_msa", field.dims(), c.channels);
  if (c.channels % c.heads) throw ConfigError("slw_msa: channels not divisible by heads");
  const WindowGeometry g = WindowGeometry::make(field.dim(2), field.dim(3), c.window_h, c.window_w,
                                                shifted ? c.shift_h() : 0, shifted ? c.shift_w() : 0);
  const std::size_t J = g.tokens();
  const Tensor<T> bias = gather(p.bias_table, {c.heads, J, J}, spatial_bias_index(c.window_h, c.window_w, c.heads));
  const Tensor<T> out = grouped_attention(window_partition(field, g), p.wq, p.wk, p.wv, p.wp, bias, c.heads,
                                          window_attention_mask(g, c.heads), trace);
  return window_reverse(out, g, field.dim(0), field.dim(1));
}

template <typename T>
Tensor<T> tw_msa(const Tensor<T>& field, const TemporalAttentionParams<T>& p, const ModelConfig& c,
                 AttentionTrace<T>* trace) {
  require_field("tw_msa", field.dims(), c.channels);
  const std::size_t N = field.dim(0), D = field.dim(1), H = field.dim(2), W = field.dim(3), C = field.dim(4);
  if (D != c.frames) {
    throw ConfigError("tw_msa: temporal bias table is sized for D=" + std::to_string(c.frames) + ", got D=" +
                      std::to_string(D));
  }
  const Tensor<T> sites = reshape(permute(field, {0, 2, 3, 1, 4}), {N * H * W, D, C});
  const Tensor<T> bias = gather(p.bias_table, {c.heads, D, D}, temporal_bias_index(D, c.heads));
  const Tensor<T> out = grouped_attention(sites, p.wq, p.wk, p.wv, p.wp, bias, c.heads, nullptr, trace);
  return permute(reshape(out, {N, H, W, D, C}), {0, 3, 1, 2, 4});
}

#define STF_INSTANTIATE_ATTN(T)                                                                              \
  template Tensor<T> window_partition(const Tensor<T>&, const WindowGeometry&);                              \
  template Tensor<T> window_reverse(const Tensor<T>&, const WindowGeometry&, std::size_t, std::size_t);      \
  template Tensor<T> slw_msa(const Tensor<T>&, const SpatialAttentionParams<T>&, const ModelConfig&, bool,   \
                             AttentionTrace<T>*);                                                             \
  template Tensor<T> tw_msa(const Tensor<T>&, const TemporalAttentionParams<T>&, const ModelConfig&,         \
                            AttentionTrace<T>*);

STF_INSTANTIATE_ATTN(float)
STF_INSTANTIATE_ATTN(double)

}  // namespace stf::model
