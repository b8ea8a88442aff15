#include "stformer/model/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace stf::model {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'F', 'C'};

struct Header {
  nlohmann::json manifest;
  std::string payload;
};

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& is) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("checkpoint: truncated header");
  return v;
}

Header read_all(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError("checkpoint: bad magic");
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto len = get<std::uint64_t>(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw IoError("checkpoint: truncated manifest");
  Header h;
  try {
    h.manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: manifest is not valid JSON: ") + e.what());
  }
  std::ostringstream rest;
  rest << is.rdbuf();
  h.payload = rest.str();
  return h;
}

}  // namespace

template <typename T>
void write_checkpoint(std::ostream& os, const ModelParams<T>& p) {
  std::ostringstream payload;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : p.named()) {
    const auto offset = static_cast<std::uint64_t>(payload.tellp());
    write_stf1(payload, t.to_array());
    const auto end = static_cast<std::uint64_t>(payload.tellp());
    tensors.push_back({{"name", name},
                       {"dims", t.dims()},
                       {"dtype", dtype_name(dtype_of<T>())},
                       {"offset", offset},
                       {"bytes", end - offset}});
  }
  nlohmann::json manifest{{"config", p.config}, {"dtype", dtype_name(dtype_of<T>())}, {"tensors", tensors}};
  const std::string text = manifest.dump();
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  const std::string blob = payload.str();
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!os) throw IoError("checkpoint: write failed");
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<T>& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, p);
}

template <typename T>
ModelParams<T> read_checkpoint(std::istream& is) {
  const Header h = read_all(is);
  ModelConfig config;
  try {
    config = h.manifest.at("config").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: bad config: ") + e.what());
  }
  ModelParams<T> p = zero_model<T>(config);
  const auto& entries = h.manifest.at("tensors");
  auto slots = p.named();
  if (entries.size() != slots.size()) {
    throw IoError("checkpoint: expected " + std::to_string(slots.size()) + " tensors, found " +
                  std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& e = entries[i];
    auto& [name, t] = slots[i];
    if (e.at("name").get<std::string>() != name) {
      throw IoError("checkpoint: tensor " + std::to_string(i) + " is '" + e.at("name").get<std::string>() +
                    "', expected '" + name + "'");
    }
    const auto offset = e.at("offset").get<std::uint64_t>();
    const auto bytes = e.at("bytes").get<std::uint64_t>();
    if (offset + bytes > h.payload.size()) throw IoError("checkpoint: tensor '" + name + "' exceeds payload");
    std::istringstream blob(h.payload.substr(offset, bytes));
    const NdArray<T> a = std::visit(
        [&](const auto& arr) -> NdArray<T> {
          using V = typename std::decay_t<decltype(arr)>::value_type;
          if constexpr (std::is_same_v<V, std::uint8_t>) {
            throw IoError("checkpoint: tensor '" + name + "' has integer dtype");
          } else {
            return array_cast<T>(arr);
          }
        },
        read_stf1(blob));
    if (a.dims != t.dims()) {
      throw IoError("checkpoint: tensor '" + name + "' has dims " + shape_str(a.dims) + ", expected " +
                    shape_str(t.dims()));
    }
    std::copy(a.data.begin(), a.data.end(), t.mutable_values().begin());
  }
  return p;
}

template <typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_checkpoint<T>(is);
}

DType checkpoint_dtype(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return parse_dtype(read_all(is).manifest.at("dtype").get<std::string>());
}

#define STF_INSTANTIATE_CKPT(T)                                                          \
  template void write_checkpoint(std::ostream&, const ModelParams<T>&);                 \
  template void save_checkpoint(const std::filesystem::path&, const ModelParams<T>&);   \
  template ModelParams<T> read_checkpoint<T>(std::istream&);                            \
  template ModelParams<T> load_checkpoint<T>(const std::filesystem::path&);

STF_INSTANTIATE_CKPT(float)
STF_INSTANTIATE_CKPT(double)

}  // namespace stf::model
