#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "stformer/core/error.hpp"

namespace stf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

/// Plain row-major dense array. No gradient bookkeeping; used for I/O and
/// for the non-differentiable simulation code.
template <typename T>
struct NdArray {
  using value_type = T;

  Shape dims;
  std::vector<T> data;

  NdArray() = default;
  explicit NdArray(Shape d, T fill = T{}) : dims(std::move(d)), data(shape_numel(dims), fill) {}
  NdArray(Shape d, std::vector<T> values) : dims(std::move(d)), data(std::move(values)) {
    if (data.size() != shape_numel(dims)) {
      throw ShapeError("NdArray: " + std::to_string(data.size()) + " values for dims " +
                       shape_str(dims));
    }
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return dims.size(); }

  bool operator==(const NdArray&) const = default;
};

template <typename To, typename From>
NdArray<To> array_cast(const NdArray<From>& a) {
  NdArray<To> out;
  out.dims = a.dims;
  out.data.assign(a.data.begin(), a.data.end());
  return out;
}

}  // namespace stf
