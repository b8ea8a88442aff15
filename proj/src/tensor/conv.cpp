#include "stformer/tensor/conv.hpp"

#include <string>
#include <vector>

#include "stformer/tensor/mac_counter.hpp"
#include "stformer/tensor/ops.hpp"

namespace stf {

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ShapeError("conv3d: zero stride");
  const auto span = static_cast<long long>(in + 2 * pad) - static_cast<long long>(k);
  if (span < 0) {
    throw ShapeError("conv3d: kernel " + std::to_string(k) + " larger than padded input " +
                     std::to_string(in + 2 * pad));
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

namespace {

// Geometry of one convolution seen from the forward (cross-correlation) side:
// `x` has cin channels at extents xs, `y` has cout channels at extents ys.
struct ConvGeom {
  std::size_t batch = 1;
  Index3 xs{}, ys{}, k{}, s{}, p{};
  std::size_t cin = 0, cout = 0;

  std::size_t x_pos() const { return xs[0] * xs[1] * xs[2]; }
  std::size_t y_pos() const { return ys[0] * ys[1] * ys[2]; }
  std::size_t taps() const { return k[0] * k[1] * k[2]; }
};

// Input coordinate hit by output coordinate `o` through tap `t`, or -1.
inline long long tap_source(std::size_t o, std::size_t t, std::size_t s, std::size_t p, std::size_t n) {
  const long long i = static_cast<long long>(o * s + t) - static_cast<long long>(p);
  return (i < 0 || i >= static_cast<long long>(n)) ? -1 : i;
}

template <typename T>
std::uint64_t conv_forward(const ConvGeom& g, const T* x, const T* K, T* y) {
  std::uint64_t pairs = 0;
  for (std::size_t b = 0; b < g.batch; ++b) {
    const T* xb = x + b * g.x_pos() * g.cin;
    T* yb = y + b * g.y_pos() * g.cout;
    for (std::size_t od = 0; od < g.ys[0]; ++od)
      for (std::size_t oh = 0; oh < g.ys[1]; ++oh)
        for (std::size_t ow = 0; ow < g.ys[2]; ++ow) {
          T* yrow = yb + ((od * g.ys[1] + oh) * g.ys[2] + ow) * g.cout;
          for (std::size_t td = 0; td < g.k[0]; ++td) {
            const long long id = tap_source(od, td, g.s[0], g.p[0], g.xs[0]);
            if (id < 0) continue;
            for (std::size_t th = 0; th < g.k[1]; ++th) {
              const long long ih = tap_source(oh, th, g.s[1], g.p[1], g.xs[1]);
              if (ih < 0) continue;
              for (std::size_t tw = 0; tw < g.k[2]; ++tw) {
                const long long iw = tap_source(ow, tw, g.s[2], g.p[2], g.xs[2]);
                if (iw < 0) continue;
                ++pairs;
                const T* xrow = xb + ((static_cast<std::size_t>(id) * g.xs[1] + static_cast<std::size_t>(ih)) * g.xs[2] +
                                      static_cast<std::size_t>(iw)) * g.cin;
                const T* Kt = K + ((td * g.k[1] + th) * g.k[2] + tw) * g.cin * g.cout;
                for (std::size_t ci = 0; ci < g.cin; ++ci) {
                  const T xv = xrow[ci];
                  const T* kr = Kt + ci * g.cout;
                  for (std::size_t co = 0; co < g.cout; ++co) yrow[co] += xv * kr[co];
                }
              }
            }
          }
        }
  }
  return pairs * g.cin * g.cout;
}

// Output coordinate that reads input coordinate `i` through tap `t`, or -1.
inline long long tap_target(std::size_t i, std::size_t t, std::size_t s, std::size_t p, std::size_t n) {
  const long long num = static_cast<long long>(i + p) - static_cast<long long>(t);
  if (num < 0 || num % static_cast<long long>(s) != 0) return -1;
  const long long o = num / static_cast<long long>(s);
  return o >= static_cast<long long>(n) ? -1 : o;
}

// gx += K * gy, written as a gather over input positions.
template <typename T>
std::uint64_t conv_backward_input(const ConvGeom& g, const T* gy, const T* K, T* gx) {
  std::uint64_t pairs = 0;
  for (std::size_t b = 0; b < g.batch; ++b) {
    const T* gyb = gy + b * g.y_pos() * g.cout;
    T* gxb = gx + b * g.x_pos() * g.cin;
    for (std::size_t id = 0; id < g.xs[0]; ++id)
      for (std::size_t ih = 0; ih < g.xs[1]; ++ih)
        for (std::size_t iw = 0; iw < g.xs[2]; ++iw) {
          T* gxrow = gxb + ((id * g.xs[1] + ih) * g.xs[2] + iw) * g.cin;
          for (std::size_t td = 0; td < g.k[0]; ++td) {
            const long long od = tap_target(id, td, g.s[0], g.p[0], g.ys[0]);
            if (od < 0) continue;
            for (std::size_t th = 0; th < g.k[1]; ++th) {
              const long long oh = tap_target(ih, th, g.s[1], g.p[1], g.ys[1]);
              if (oh < 0) continue;
              for (std::size_t tw = 0; tw < g.k[2]; ++tw) {
                const long long ow = tap_target(iw, tw, g.s[2], g.p[2], g.ys[2]);
                if (ow < 0) continue;
                ++pairs;
                const T* gyrow = gyb + ((static_cast<std::size_t>(od) * g.ys[1] + static_cast<std::size_t>(oh)) * g.ys[2] +
                                        static_cast<std::size_t>(ow)) * g.cout;
                const T* Kt = K + ((td * g.k[1] + th) * g.k[2] + tw) * g.cin * g.cout;
                for (std::size_t ci = 0; ci < g.cin; ++ci) {
                  const T* kr = Kt + ci * g.cout;
                  T acc{0};
                  for (std::size_t co = 0; co < g.cout; ++co) acc += kr[co] * gyrow[co];
                  gxrow[ci] += acc;
                }
              }
            }
          }
        }
  }
  return pairs * g.cin * g.cout;
}

// gK += x (outer) gy summed over positions.
template <typename T>
void conv_backward_kernel(const ConvGeom& g, const T* x, const T* gy, T* gK) {
  for (std::size_t b = 0; b < g.batch; ++b) {
    const T* xb = x + b * g.x_pos() * g.cin;
    const T* gyb = gy + b * g.y_pos() * g.cout;
    for (std::size_t od = 0; od < g.ys[0]; ++od)
      for (std::size_t oh = 0; oh < g.ys[1]; ++oh)
        for (std::size_t ow = 0; ow < g.ys[2]; ++ow) {
          const T* gyrow = gyb + ((od * g.ys[1] + oh) * g.ys[2] + ow) * g.cout;
          for (std::size_t td = 0; td < g.k[0]; ++td) {
            const long long id = tap_source(od, td, g.s[0], g.p[0], g.xs[0]);
            if (id < 0) continue;
            for (std::size_t th = 0; th < g.k[1]; ++th) {
              const long long ih = tap_source(oh, th, g.s[1], g.p[1], g.xs[1]);
              if (ih < 0) continue;
              for (std::size_t tw = 0; tw < g.k[2]; ++tw) {
                const long long iw = tap_source(ow, tw, g.s[2], g.p[2], g.xs[2]);
                if (iw < 0) continue;
                const T* xrow = xb + ((static_cast<std::size_t>(id) * g.xs[1] + static_cast<std::size_t>(ih)) * g.xs[2] +
                                      static_cast<std::size_t>(iw)) * g.cin;
                T* gKt = gK + ((td * g.k[1] + th) * g.k[2] + tw) * g.cin * g.cout;
                for (std::size_t ci = 0; ci < g.cin; ++ci) {
                  const T xv = xrow[ci];
                  T* gkr = gKt + ci * g.cout;
                  for (std::size_t co = 0; co < g.cout; ++co) gkr[co] += xv * gyrow[co];
                }
              }
            }
          }
        }
  }
}

struct Layout {
  bool batched;
  std::size_t batch;
  Index3 ext;
  std::size_t channels;
};

Layout read_layout(const char* op, const Shape& d) {
  if (d.size() == 5) return {true, d[0], {d[1], d[2], d[3]}, d[4]};
  if (d.size() == 4) return {false, 1, {d[0], d[1], d[2]}, d[3]};
  throw ShapeError(std::string(op) + ": input must be [N,D,H,W,C] or [D,H,W,C], got " + shape_str(d));
}

Shape make_dims(const Layout& l, const Index3& ext, std::size_t channels) {
  if (l.batched) return {l.batch, ext[0], ext[1], ext[2], channels};
  return {ext[0], ext[1], ext[2], channels};
}

template <typename T>
void add_bias(std::vector<T>& out, std::span<const T> bias) {
  const std::size_t c = bias.size();
  for (std::size_t i = 0; i < out.size(); i += c) {
    for (std::size_t j = 0; j < c; ++j) out[i + j] += bias[j];
  }
}

template <typename T>
void bias_grad(TensorNode<T>& bias, const std::vector<T>& g) {
  bias.ensure_grad();
  const std::size_t c = bias.data.size();
  for (std::size_t i = 0; i < g.size(); i += c) {
    for (std::size_t j = 0; j < c; ++j) bias.grad[j] += g[i + j];
  }
}

template <typename T>
Tape<T>* tape_if_needed(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& c) {
  Tape<T>* tape = Tape<T>::active();
  if (!tape) return nullptr;
  if (a.requires_grad() || b.requires_grad() || (c.defined() && c.requires_grad())) return tape;
  return nullptr;
}

template <typename T>
void check_kernel(const char* op, const Tensor<T>& kernel, const Tensor<T>& bias, std::size_t in_c,
                  std::size_t bias_c_index) {
  if (kernel.rank() != 5) throw ShapeError(std::string(op) + ": kernel must be rank 5");
  const Shape& kd = kernel.dims();
  const std::size_t in_index = bias_c_index == 4 ? 3 : 4;
  if (kd[in_index] != in_c) {
    throw ShapeError(std::string(op) + ": kernel " + shape_str(kd) + " expects " +
                     std::to_string(kd[in_index]) + " input channels, input has " + std::to_string(in_c));
  }
  if (bias.defined() && bias.dims() != Shape{kd[bias_c_index]}) {
    throw ShapeError(std::string(op) + ": bias dims " + shape_str(bias.dims()) + " for kernel " + shape_str(kd));
  }
}

}  // namespace

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 const Conv3dOptions& opt) {
  const Layout l = read_layout("conv3d", input.dims());
  check_kernel("conv3d", kernel, bias, l.channels, 4);
  const Shape& kd = kernel.dims();
  ConvGeom g;
  g.batch = l.batch;
  g.xs = l.ext;
  g.k = {kd[0], kd[1], kd[2]};
  g.s = opt.stride;
  g.p = opt.pad;
  g.cin = kd[3];
  g.cout = kd[4];
  for (int a = 0; a < 3; ++a) g.ys[a] = conv_out_extent(g.xs[a], g.k[a], g.s[a], g.p[a]);

  std::vector<T> out(g.batch * g.y_pos() * g.cout, T{0});
  MacCounter::report("conv3d", conv_forward(g, input.values().data(), kernel.values().data(), out.data()));
  if (bias.defined()) add_bias(out, bias.values());
  detail::check_finite<T>("conv3d", out);
  Tensor<T> result(make_dims(l, g.ys, g.cout), std::move(out));

  if (Tape<T>* tape = tape_if_needed(input, kernel, bias)) {
    auto in = input.node(), kn = kernel.node(), on = result.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    result.node()->requires_grad = true;
    result.node()->leaf = false;
    std::vector<std::shared_ptr<TensorNode<T>>> inputs{in, kn};
    if (bn) inputs.push_back(bn);
    tape->record({"conv3d", on, inputs, [g, in, kn, bn, on] {
                    if (in->requires_grad) {
                      in->ensure_grad();
                      conv_backward_input(g, on->grad.data(), kn->data.data(), in->grad.data());
                    }
                    if (kn->requires_grad) {
                      kn->ensure_grad();
                      conv_backward_kernel(g, in->data.data(), on->grad.data(), kn->grad.data());
                    }
                    if (bn && bn->requires_grad) bias_grad(*bn, on->grad);
                  }});
  }
  return result;
}

template <typename T>
Tensor<T> conv3d_transposed(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                            const Conv3dOptions& opt) {
  const Layout l = read_layout("conv3d_transposed", input.dims());
  check_kernel("conv3d_transposed", kernel, bias, l.channels, 3);
  const Shape& kd = kernel.dims();
  ConvGeom g;
  g.batch = l.batch;
  g.ys = l.ext;
  g.k = {kd[0], kd[1], kd[2]};
  g.s = opt.stride;
  g.p = opt.pad;
  g.cin = kd[3];
  g.cout = kd[4];
  for (int a = 0; a < 3; ++a) {
    if (opt.output_padding[a] >= std::max<std::size_t>(g.s[a], 1)) {
      throw ShapeError("conv3d_transposed: output_padding must be smaller than stride");
    }
    const auto ext = static_cast<long long>((g.ys[a] - 1) * g.s[a] + g.k[a] + opt.output_padding[a]) -
                     static_cast<long long>(2 * g.p[a]);
    if (g.ys[a] == 0 || ext <= 0) throw ShapeError("conv3d_transposed: nonpositive output extent");
    g.xs[a] = static_cast<std::size_t>(ext);
    if (conv_out_extent(g.xs[a], g.k[a], g.s[a], g.p[a]) != g.ys[a]) {
      throw ShapeError("conv3d_transposed: geometry is not the adjoint of a valid conv3d");
    }
  }

  std::vector<T> out(g.batch * g.x_pos() * g.cin, T{0});
  MacCounter::report("conv3d_transposed",
                     conv_backward_input(g, input.values().data(), kernel.values().data(), out.data()));
  if (bias.defined()) add_bias(out, bias.values());
  detail::check_finite<T>("conv3d_transposed", out);
  Tensor<T> result(make_dims(l, g.xs, g.cin), std::move(out));

  if (Tape<T>* tape = tape_if_needed(input, kernel, bias)) {
    auto in = input.node(), kn = kernel.node(), on = result.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    result.node()->requires_grad = true;
    result.node()->leaf = false;
    std::vector<std::shared_ptr<TensorNode<T>>> inputs{in, kn};
    if (bn) inputs.push_back(bn);
    tape->record({"conv3d_transposed", on, inputs, [g, in, kn, bn, on] {
                    if (in->requires_grad) {
                      in->ensure_grad();
                      conv_forward(g, on->grad.data(), kn->data.data(), in->grad.data());
                    }
                    if (kn->requires_grad) {
                      kn->ensure_grad();
                      conv_backward_kernel(g, on->grad.data(), in->data.data(), kn->grad.data());
                    }
                    if (bn && bn->requires_grad) bias_grad(*bn, on->grad);
                  }});
  }
  return result;
}

template Tensor<float> conv3d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, const Conv3dOptions&);
template Tensor<double> conv3d(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, const Conv3dOptions&);
template Tensor<float> conv3d_transposed(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, const Conv3dOptions&);
template Tensor<double> conv3d_transposed(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, const Conv3dOptions&);

}  // namespace stf
