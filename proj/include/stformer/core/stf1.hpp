#pragma once

// STF1 tensor container:
//   bytes 0..3  magic "STF1"
//   byte  4     dtype code (0 = f32, 1 = f64, 2 = u8)
//   byte  5     ndim
//   then ndim little-endian u32 extents, then the row-major little-endian payload.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <type_traits>
#include <variant>

#include "stformer/core/ndarray.hpp"

namespace stf {

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

std::string dtype_name(DType d);
DType parse_dtype(const std::string& name);
std::size_t dtype_size(DType d);

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }
template <>
constexpr DType dtype_of<std::uint8_t>() { return DType::u8; }

using AnyArray = std::variant<NdArray<float>, NdArray<double>, NdArray<std::uint8_t>>;

DType any_dtype(const AnyArray& a);
const Shape& any_dims(const AnyArray& a);

void write_stf1(std::ostream& os, const AnyArray& a);
AnyArray read_stf1(std::istream& is);

void save_stf1(const std::filesystem::path& path, const AnyArray& a);
AnyArray load_stf1(const std::filesystem::path& path);

/// Loads and converts to T. Converting to u8 from a float type is refused.
template <typename T>
NdArray<T> load_stf1_as(const std::filesystem::path& path) {
  AnyArray any = load_stf1(path);
  if constexpr (std::is_same_v<T, std::uint8_t>) {
    if (!std::holds_alternative<NdArray<std::uint8_t>>(any)) {
      throw IoError(path.string() + ": expected u8 payload, found " + dtype_name(any_dtype(any)));
    }
  }
  return std::visit([](auto&& arr) { return array_cast<T>(arr); }, any);
}

}  // namespace stf
