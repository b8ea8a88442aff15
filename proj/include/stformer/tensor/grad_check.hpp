#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "stformer/tensor/activation_pattern.hpp"
#include "stformer/tensor/tape.hpp"
#include "stformer/tensor/tensor.hpp"

namespace stf {

template <typename T>
struct GradCheckOptions {
  T h = T(1e-5);
  /// Denominator floor: rel = |tape - fd| / max(|tape|, |fd|, floor).
  T floor = T(1e-6);
  /// Coordinates probed per parameter (0 = all). Sampled with `seed`.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  /// When a probe lands on a different activation pattern than the base
  /// point, retry that coordinate with h / 10, at most this many times. A
  /// kink on one side only is handled by a one-sided difference towards the
  /// other side.
  std::size_t kink_retries = 0;
};

template <typename T>
struct GradCheckReport {
  T max_rel_error = T{0};
  std::size_t coords_checked = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  T worst_tape = T{0};
  T worst_fd = T{0};
  /// Coordinates whose step had to shrink, those settled by a one-sided
  /// difference, and those with kinks on both sides (skipped, not compared).
  std::size_t kink_shrunk = 0;
  std::size_t kink_one_sided = 0;
  std::size_t kink_unresolved = 0;
};

/// Compares tape gradients of the scalar `f()` with respect to every tensor
/// in `params` against central differences (f(x+h e) - f(x-h e)) / 2h.
template <typename T>
GradCheckReport<T> grad_check(const std::function<Tensor<T>()>& f, std::vector<Tensor<T>> params,
                              const GradCheckOptions<T>& opt = {}) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape<T> tape;
    typename Tape<T>::Recording rec(tape);
    Tensor<T> loss = f();
    tape.backward(loss);
  }
  std::vector<std::vector<T>> tape_grads;
  for (auto& p : params) {
    tape_grads.emplace_back(p.has_grad() ? std::vector<T>(p.grad().begin(), p.grad().end())
                                         : std::vector<T>(p.numel(), T{0}));
  }

  ActivationPattern base;
  {
    ActivationPattern::Scope scope(base);
    f();
  }
  GradCheckReport<T> report;
  std::mt19937_64 rng(opt.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_values();
    std::vector<std::size_t> coords(values.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (opt.max_coords && coords.size() > opt.max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const T saved = values[i];
      auto probe = [&](T at, ActivationPattern& pattern) {
        values[i] = at;
        ActivationPattern::Scope scope(pattern);
        const T v = f().item();
        values[i] = saved;
        return v;
      };
      T h = opt.h;
      T fd{};
      bool resolved = false;
      for (std::size_t attempt = 0; attempt <= opt.kink_retries; ++attempt, h /= T{10}) {
        ActivationPattern at_up, at_down;
        const T up = probe(saved + h, at_up);
        const T down = probe(saved - h, at_down);
        const bool up_ok = at_up == base, down_ok = at_down == base;
        if ((up_ok && down_ok) || opt.kink_retries == 0) {
          fd = (up - down) / (T{2} * h);
          resolved = true;
          break;
        }
        if (attempt == 0) ++report.kink_shrunk;
        if (up_ok != down_ok) {
          // Only one side stays on the base piece: second-order one-sided
          // difference towards that side, if its 2h probe stays there too.
          const T dir = up_ok ? T{1} : T{-1};
          ActivationPattern at_far, at_base;
          const T far = probe(saved + dir * T{2} * h, at_far);
          if (at_far == base) {
            const T mid = probe(saved, at_base);
            const T near = up_ok ? up : down;
            fd = dir * (T{4} * near - T{3} * mid - far) / (T{2} * h);
            ++report.kink_one_sided;
            resolved = true;
            break;
          }
        }
      }
      if (!resolved) {
        ++report.kink_unresolved;
        continue;
      }
      const T tg = tape_grads[pi][i];
      const T denom = std::max({std::abs(tg), std::abs(fd), opt.floor});
      const T rel = std::abs(tg - fd) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = pi;
        report.worst_index = i;
        report.worst_tape = tg;
        report.worst_fd = fd;
      }
    }
  }
  return report;
}

/// Single-input form: max relative error of d f(x) / dx.
template <typename T>
T grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x, T h) {
  Tensor<T> probe = x.clone();
  GradCheckOptions<T> opt;
  opt.h = h;
  return grad_check<T>([&] { return f(probe); }, {probe}, opt).max_rel_error;
}

}  // namespace stf
