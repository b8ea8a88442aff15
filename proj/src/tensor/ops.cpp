#include "stformer/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "stformer/tensor/activation_pattern.hpp"
#include "stformer/tensor/mac_counter.hpp"

namespace stf {

namespace detail {

template <typename T>
void check_finite(std::string_view op, std::span<const T> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NonFiniteError(std::string(op) + ": non-finite value " + std::to_string(values[i]) +
                           " at flat index " + std::to_string(i));
    }
  }
}

}  // namespace detail

namespace {

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

template <typename T>
Tape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = Tape<T>::active();
  if (!tape) return nullptr;
  for (const Tensor<T>* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

template <typename T>
Tensor<T> finish(std::string_view op, Shape dims, std::vector<T> data) {
  detail::check_finite<T>(op, data);
  return Tensor<T>(std::move(dims), std::move(data));
}

template <typename T>
void record(Tape<T>* tape, std::string_view op, Tensor<T>& out, std::vector<NodePtr<T>> inputs,
            std::function<void()> backward) {
  out.node()->requires_grad = true;
  out.node()->leaf = false;
  tape->record({std::string(op), out.node(), std::move(inputs), std::move(backward)});
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Resolves the broadcast of two operands; each operand is read at i % size.
Shape broadcast_dims(std::string_view op, const Shape& a, const Shape& b) {
  const std::size_t na = shape_numel(a), nb = shape_numel(b);
  if (a == b) return a;
  if (nb == 1) return a;
  if (na == 1) return b;
  if (is_suffix(b, a)) return a;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
}

enum class BinaryKind { add, sub, mul };

template <typename T>
Tensor<T> binary(BinaryKind kind, std::string_view op, const Tensor<T>& a, const Tensor<T>& b) {
  Shape dims = broadcast_dims(op, a.dims(), b.dims());
  const std::size_t n = shape_numel(dims), na = a.numel(), nb = b.numel();
  std::vector<T> out(n);
  auto av = a.values();
  auto bv = b.values();
  switch (kind) {
    case BinaryKind::add:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i % na] + bv[i % nb];
      break;
    case BinaryKind::sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i % na] - bv[i % nb];
      break;
    case BinaryKind::mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i % na] * bv[i % nb];
      break;
  }
  Tensor<T> result = finish<T>(op, std::move(dims), std::move(out));
  if (Tape<T>* tape = recording_tape<T>({&a, &b})) {
    NodePtr<T> an = a.node(), bn = b.node(), on = result.node();
    record<T>(tape, op, result, {an, bn}, [kind, an, bn, on, n, na, nb] {
      const auto& g = on->grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          an->grad[i % na] += kind == BinaryKind::mul ? g[i] * bn->data[i % nb] : g[i];
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          T gi = g[i];
          if (kind == BinaryKind::sub) gi = -gi;
          if (kind == BinaryKind::mul) gi *= an->data[i % na];
          bn->grad[i % nb] += gi;
        }
      }
    });
  }
  return result;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(BinaryKind::add, "add", a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(BinaryKind::sub, "sub", a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(BinaryKind::mul, "mul", a, b);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, T b) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (T& v : out) v += b;
  Tensor<T> result = finish<T>("add_scalar", a.dims(), std::move(out));
  if (Tape<T>* tape = recording_tape<T>({&a})) {
    NodePtr<T> an = a.node(), on = result.node();
    record<T>(tape, "add_scalar", result, {an}, [an, on] {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, T b) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (T& v : out) v *= b;
  Tensor<T> result = finish<T>("mul_scalar", a.dims(), std::move(out));
  if (Tape<T>* tape = recording_tape<T>({&a})) {
    NodePtr<T> an = a.node(), on = result.node();
    record<T>(tape, "mul_scalar", result, {an}, [an, on, b] {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * b;
    });
  }
  return result;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  ActivationPattern::observe(a.values());
  std::vector<T> out(a.values().begin(), a.values().end());
  for (T& v : out) v = v > T{0} ? v : v * slope;
  Tensor<T> result = finish<T>("leaky_relu", a.dims(), std::move(out));
  if (Tape<T>* tape = recording_tape<T>({&a})) {
    NodePtr<T> an = a.node(), on = result.node();
    record<T>(tape, "leaky_relu", result, {an}, [an, on, slope] {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        an->grad[i] += an->data[i] > T{0} ? on->grad[i] : on->grad[i] * slope;
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc{0};
  for (T v : a.values()) acc += v;
  Tensor<T> result = finish<T>("sum", Shape{}, std::vector<T>{acc});
  if (Tape<T>* tape = recording_tape<T>({&a})) {
    NodePtr<T> an = a.node(), on = result.node();
    record<T>(tape, "sum", result, {an}, [an, on] {
      an->ensure_grad();
      const T g = on->grad[0];
      for (T& v : an->grad) v += g;
    });
  }
  return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return mul(sum(a), T{1} / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("mse_loss: " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  }
  Tensor<T> d = sub(a, b);
  return mean(mul(d, d));
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul: operands need rank >= 2");
  const Shape& ad = a.dims();
  const Shape& bd = b.dims();
  const std::size_t m = ad[ad.size() - 2], k = ad.back();
  const std::size_t kb = bd[bd.size() - 2], n = bd.back();
  if (k != kb) {
    throw ShapeError("matmul: inner dims differ, " + shape_str(ad) + " x " + shape_str(bd));
  }
  const bool shared_b = bd.size() == 2;
  if (!shared_b && !std::equal(ad.begin(), ad.end() - 2, bd.begin(), bd.end() - 2)) {
    throw ShapeError("matmul: batch dims differ, " + shape_str(ad) + " x " + shape_str(bd));
  }
  const std::size_t batch = a.numel() / (m * k);
  Shape dims(ad.begin(), ad.end() - 2);
  dims.push_back(m);
  dims.push_back(n);

  std::vector<T> out(batch * m * n, T{0});
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t p = 0; p < batch; ++p) {
    const T* A = av.data() + p * m * k;
    const T* B = bv.data() + (shared_b ? 0 : p * k * n);
    T* C = out.data() + p * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = C + i * n;
      for (std::size_t q = 0; q < k; ++q) {
        const T aiq = A[i * k + q];
        const T* brow = B + q * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aiq * brow[j];
      }
    }
  }
  MacCounter::report("matmul", static_cast<std::uint64_t>(batch) * m * k * n);

  Tensor<T> result = finish<T>("matmul", std::move(dims), std::move(out));
  if (Tape<T>* tape = recording_tape<T>({&a, &b})) {
    NodePtr<T> an = a.node(), bn = b.node(), on = result.node();
    record<T>(tape, "matmul", result, {an, bn}, [an, bn, on, batch, m, k, n, shared_b] {
      const T* G = on->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t p = 0; p < batch; ++p) {
          const T* B = bn->data.data() + (shared_b ? 0 : p * k * n);
          T* GA = an->grad.data() + p * m * k;
          for (std::size_t i = 0; i < m; ++i) {
            const T* grow = G + p * m * n + i * n;
            for (std::size_t q = 0; q < k; ++q) {
              const T* brow = B + q * n;
              T acc{0};
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              GA[i * k + q] += acc;
            }
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t p = 0; p < batch; ++p) {
          const T* A = an->data.data() + p * m * k;
          T* GB = bn->grad.data() + (shared_b ? 0 : p * k * n);
          for (std::size_t i = 0; i < m; ++i) {
            const T* grow = G + p * m * n + i * n;
            for (std::size_t q = 0; q < k; ++q) {
              const T aiq = A[i * k + q];
              T* gbrow = GB + q * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += aiq * grow[j];
            }
          }
        }
      }
    });
  }
  return result;
}

namespace {

// Mask dims match the trailing dims of t, except that the leading mask dim
// only has to divide its counterpart (the mask then repeats along it).
bool tiles_suffix(const Shape& m, const Shape& t) {
  if (m.empty() || m.size() > t.size()) return false;
  const std::size_t off = t.size() - m.size();
  if (m[0] == 0 || t[off] % m[0] != 0) return false;
  for (std::size_t i = 1; i < m.size(); ++i)
    if (m[i] != t[off + i]) return false;
  return true;
}

template <typename T>
Tensor<T> softmax_impl(const Tensor<T>& t, std::shared_ptr<const SoftmaxMask> mask) {
  if (t.rank() < 1 || t.dims().back() < 1) throw ShapeError("softmax: last dim must be >= 1");
  const std::size_t n = t.dims().back();
  const std::size_t rows = t.numel() / n;
  std::size_t mask_rows = 0;
  if (mask) {
    if (mask->allowed.size() != shape_numel(mask->dims) || !tiles_suffix(mask->dims, t.dims())) {
      throw ShapeError("masked_softmax: mask dims " + shape_str(mask->dims) +
                       " do not tile the trailing dims of " + shape_str(t.dims()));
    }
    mask_rows = mask->allowed.size() / n;
  }
  auto x = t.values();
  std::vector<T> out(t.numel(), T{0});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * n;
    T* yr = out.data() + r * n;
    const std::uint8_t* ok = mask ? mask->allowed.data() + (r % mask_rows) * n : nullptr;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!ok || ok[j]) mx = std::max(mx, xr[j]);
    }
    if (mx == -std::numeric_limits<T>::infinity()) continue;  // fully masked row
    T denom{0};
    for (std::size_t j = 0; j < n; ++j) {
      if (!ok || ok[j]) {
        yr[j] = std::exp(xr[j] - mx);
        denom += yr[j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= denom;
  }
  const char* op = mask ? "masked_softmax" : "softmax";
  Tensor<T> result = finish<T>(op, t.dims(), std::move(out));
  if (Tape<T>* tape = recording_tape<T>({&t})) {
    NodePtr<T> tn = t.node(), on = result.node();
    record<T>(tape, op, result, {tn}, [tn, on, rows, n] {
      tn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = on->data.data() + r * n;
        const T* g = on->grad.data() + r * n;
        T dot{0};
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        T* gx = tn->grad.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (g[j] - dot);
      }
    });
  }
  return result;
}

}  // namespace

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& t) {
  return softmax_impl<T>(t, nullptr);
}

template <typename T>
Tensor<T> masked_softmax_lastdim(const Tensor<T>& t, std::shared_ptr<const SoftmaxMask> mask) {
  if (!mask) return softmax_impl<T>(t, nullptr);
  return softmax_impl<T>(t, std::move(mask));
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& t, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (t.rank() < 1) throw ShapeError("layer_norm: rank-0 input");
  const std::size_t c = t.dims().back();
  if (gamma.dims() != Shape{c} || beta.dims() != Shape{c}) {
    throw ShapeError("layer_norm: feature dim " + std::to_string(c) + " but gamma " +
                     shape_str(gamma.dims()) + ", beta " + shape_str(beta.dims()));
  }
  const std::size_t rows = t.numel() / c;
  auto x = t.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<T> out(t.numel());
  auto xhat = std::make_shared<std::vector<T>>(t.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * c;
    T mu{0};
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<T>(c);
    T var{0};
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(c);
    const T is = T{1} / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (xr[j] - mu) * is;
      (*xhat)[r * c + j] = h;
      out[r * c + j] = gv[j] * h + bv[j];
    }
  }
  Tensor<T> result = finish<T>("layer_norm", t.dims(), std::move(out));
  if (Tape<T>* tape = recording_tape<T>({&t, &gamma, &beta})) {
    NodePtr<T> tn = t.node(), gn = gamma.node(), bn = beta.node(), on = result.node();
    record<T>(tape, "layer_norm", result, {tn, gn, bn}, [tn, gn, bn, on, xhat, inv_std, rows, c] {
      const T* g = on->grad.data();
      if (gn->requires_grad) gn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      if (tn->requires_grad) tn->ensure_grad();
      std::vector<T> gh(c);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = g + r * c;
        const T* hr = xhat->data() + r * c;
        if (gn->requires_grad) {
          for (std::size_t j = 0; j < c; ++j) gn->grad[j] += gr[j] * hr[j];
        }
        if (bn->requires_grad) {
          for (std::size_t j = 0; j < c; ++j) bn->grad[j] += gr[j];
        }
        if (tn->requires_grad) {
          T mean_gh{0}, mean_ghh{0};
          for (std::size_t j = 0; j < c; ++j) {
            gh[j] = gr[j] * gn->data[j];
            mean_gh += gh[j];
            mean_ghh += gh[j] * hr[j];
          }
          mean_gh /= static_cast<T>(c);
          mean_ghh /= static_cast<T>(c);
          T* gx = tn->grad.data() + r * c;
          const T is = (*inv_std)[r];
          for (std::size_t j = 0; j < c; ++j) gx[j] += is * (gh[j] - mean_gh - hr[j] * mean_ghh);
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& t, Shape dims) {
  if (shape_numel(dims) != t.numel()) {
    throw ShapeError("reshape: " + shape_str(t.dims()) + " -> " + shape_str(dims));
  }
  Tensor<T> result(std::move(dims), std::vector<T>(t.values().begin(), t.values().end()));
  if (Tape<T>* tape = recording_tape<T>({&t})) {
    NodePtr<T> tn = t.node(), on = result.node();
    record<T>(tape, "reshape", result, {tn}, [tn, on] {
      tn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) tn->grad[i] += on->grad[i];
    });
  }
  return result;
}

namespace {

// Source offset for each destination offset of a permutation.
std::shared_ptr<std::vector<std::int64_t>> permutation_index(const Shape& in,
                                                             const std::vector<std::size_t>& perm) {
  const std::size_t r = in.size();
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  Shape out(r);
  std::vector<std::size_t> stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out[i] = in[perm[i]];
    stride[i] = in_stride[perm[i]];
  }
  const std::size_t n = shape_numel(in);
  auto index = std::make_shared<std::vector<std::int64_t>>(n);
  std::vector<std::size_t> ctr(r, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*index)[i] = static_cast<std::int64_t>(src);
    for (std::size_t d = r; d-- > 0;) {
      if (++ctr[d] < out[d]) {
        src += stride[d];
        break;
      }
      src -= stride[d] * (out[d] - 1);
      ctr[d] = 0;
    }
  }
  return index;
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& t, const std::vector<std::size_t>& perm) {
  const std::size_t r = t.rank();
  std::vector<std::size_t> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(r);
  std::iota(iota.begin(), iota.end(), std::size_t{0});
  if (perm.size() != r || sorted != iota) {
    throw ShapeError("permute: invalid permutation for rank " + std::to_string(r));
  }
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) out[i] = t.dims()[perm[i]];
  return gather(t, std::move(out), permutation_index(t.dims(), perm));
}

template <typename T>
Tensor<T> gather(const Tensor<T>& t, Shape out_dims,
                 std::shared_ptr<const std::vector<std::int64_t>> index) {
  const std::size_t n = shape_numel(out_dims);
  if (!index || index->size() != n) throw ShapeError("gather: index size does not match output dims");
  const auto limit = static_cast<std::int64_t>(t.numel());
  auto x = t.values();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t s = (*index)[i];
    if (s >= limit) throw ShapeError("gather: index out of range");
    out[i] = s >= 0 ? x[static_cast<std::size_t>(s)] : T{0};
  }
  Tensor<T> result(std::move(out_dims), std::move(out));
  if (Tape<T>* tape = recording_tape<T>({&t})) {
    NodePtr<T> tn = t.node(), on = result.node();
    record<T>(tape, "gather", result, {tn}, [tn, on, index] {
      tn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const std::int64_t s = (*index)[i];
        if (s >= 0) tn->grad[static_cast<std::size_t>(s)] += on->grad[i];
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> slice_lastdim(const Tensor<T>& t, std::size_t begin, std::size_t end) {
  if (t.rank() < 1 || begin >= end || end > t.dims().back()) {
    throw ShapeError("slice_lastdim: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_str(t.rank() ? t.dims() : Shape{}));
  }
  const std::size_t c = t.dims().back(), w = end - begin, rows = t.numel() / c;
  Shape dims = t.dims();
  dims.back() = w;
  auto index = std::make_shared<std::vector<std::int64_t>>(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < w; ++j) (*index)[r * w + j] = static_cast<std::int64_t>(r * c + begin + j);
  }
  return gather(t, std::move(dims), std::move(index));
}

template <typename T>
Tensor<T> concat_lastdim(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 1 || a.rank() != b.rank() ||
      !std::equal(a.dims().begin(), a.dims().end() - 1, b.dims().begin())) {
    throw ShapeError("concat_lastdim: " + shape_str(a.dims()) + " with " + shape_str(b.dims()));
  }
  const std::size_t ca = a.dims().back(), cb = b.dims().back(), c = ca + cb;
  const std::size_t rows = a.numel() / ca;
  Shape dims = a.dims();
  dims.back() = c;
  std::vector<T> out(rows * c);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * ca, ca, out.data() + r * c);
    std::copy_n(bv.data() + r * cb, cb, out.data() + r * c + ca);
  }
  Tensor<T> result(std::move(dims), std::move(out));
  if (Tape<T>* tape = recording_tape<T>({&a, &b})) {
    NodePtr<T> an = a.node(), bn = b.node(), on = result.node();
    record<T>(tape, "concat", result, {an, bn}, [an, bn, on, rows, ca, cb, c] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < ca; ++j) an->grad[r * ca + j] += on->grad[r * c + j];
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cb; ++j) bn->grad[r * cb + j] += on->grad[r * c + ca + j];
        }
      }
    });
  }
  return result;
}

#define STF_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> add(const Tensor<T>&, T);                                                    \
  template Tensor<T> mul(const Tensor<T>&, T);                                                    \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                       \
  template Tensor<T> mean(const Tensor<T>&);                                                      \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> softmax_lastdim(const Tensor<T>&);                                           \
  template Tensor<T> masked_softmax_lastdim(const Tensor<T>&, std::shared_ptr<const SoftmaxMask>); \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);         \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                            \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                  \
  template Tensor<T> gather(const Tensor<T>&, Shape, std::shared_ptr<const std::vector<std::int64_t>>); \
  template Tensor<T> slice_lastdim(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> concat_lastdim(const Tensor<T>&, const Tensor<T>&);                          \
  template void detail::check_finite<T>(std::string_view, std::span<const T>);

STF_INSTANTIATE_OPS(float)
STF_INSTANTIATE_OPS(double)

}  // namespace stf
