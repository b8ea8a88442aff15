#include "stformer/core/stf1.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace stf {

static_assert(std::endian::native == std::endian::little,
              "STF1 I/O assumes a little-endian host");

std::string dtype_name(DType d) {
  switch (d) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::u8: return "u8";
  }
  return "?";
}

DType parse_dtype(const std::string& name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  if (name == "u8") return DType::u8;
  throw ConfigError("unknown dtype '" + name + "' (expected f32, f64 or u8)");
}

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
  }
  return 0;
}

DType any_dtype(const AnyArray& a) {
  return std::visit([](auto&& arr) { return dtype_of<typename std::decay_t<decltype(arr.data)>::value_type>(); }, a);
}

const Shape& any_dims(const AnyArray& a) {
  return std::visit([](auto&& arr) -> const Shape& { return arr.dims; }, a);
}

namespace {

constexpr std::array<char, 4> kMagic{'S', 'T', 'F', '1'};

template <typename T>
void write_payload(std::ostream& os, const NdArray<T>& arr) {
  os.write(reinterpret_cast<const char*>(arr.data.data()),
           static_cast<std::streamsize>(arr.data.size() * sizeof(T)));
}

template <typename T>
NdArray<T> read_payload(std::istream& is, Shape dims) {
  NdArray<T> arr(std::move(dims));
  is.read(reinterpret_cast<char*>(arr.data.data()),
          static_cast<std::streamsize>(arr.data.size() * sizeof(T)));
  if (!is) throw IoError("STF1: truncated payload");
  return arr;
}

}  // namespace

void write_stf1(std::ostream& os, const AnyArray& a) {
  const Shape& dims = any_dims(a);
  if (dims.size() > 255) throw ShapeError("STF1: rank above 255");
  os.write(kMagic.data(), 4);
  const char header[2] = {static_cast<char>(any_dtype(a)), static_cast<char>(dims.size())};
  os.write(header, 2);
  for (std::size_t d : dims) {
    if (d > 0xFFFFFFFFu) throw ShapeError("STF1: extent exceeds u32");
    const auto e = static_cast<std::uint32_t>(d);
    os.write(reinterpret_cast<const char*>(&e), 4);
  }
  std::visit([&](auto&& arr) { write_payload(os, arr); }, a);
  if (!os) throw IoError("STF1: write failed");
}

AnyArray read_stf1(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || magic != kMagic) throw IoError("STF1: bad magic");
  unsigned char header[2];
  is.read(reinterpret_cast<char*>(header), 2);
  if (!is) throw IoError("STF1: truncated header");
  if (header[0] > 2) throw IoError("STF1: unknown dtype code " + std::to_string(header[0]));
  Shape dims(header[1]);
  for (auto& d : dims) {
    std::uint32_t e = 0;
    is.read(reinterpret_cast<char*>(&e), 4);
    if (!is) throw IoError("STF1: truncated extents");
    d = e;
  }
  switch (static_cast<DType>(header[0])) {
    case DType::f32: return read_payload<float>(is, std::move(dims));
    case DType::f64: return read_payload<double>(is, std::move(dims));
    case DType::u8: return read_payload<std::uint8_t>(is, std::move(dims));
  }
  throw IoError("STF1: unreachable dtype");
}

void save_stf1(const std::filesystem::path& path, const AnyArray& a) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_stf1(os, a);
}

AnyArray load_stf1(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return read_stf1(is);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace stf
