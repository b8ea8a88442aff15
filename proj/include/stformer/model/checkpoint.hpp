#pragma once

// Checkpoint container:
//   "STFC" | u32 version | u64 manifest length | manifest JSON | payload
// The manifest lists {name, dims, dtype, offset, bytes} per tensor, offsets
// relative to the payload start; each payload entry is an STF1 blob.

#include <filesystem>
#include <iosfwd>

#include "stformer/core/stf1.hpp"
#include "stformer/model/params.hpp"

namespace stf::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_checkpoint(std::ostream& os, const ModelParams<T>& p);
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<T>& p);

/// Loads a checkpoint, converting stored values to T if the file holds the other float type.
template <typename T>
ModelParams<T> read_checkpoint(std::istream& is);
template <typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path& path);

/// Element type the checkpoint was written with.
DType checkpoint_dtype(const std::filesystem::path& path);

}  // namespace stf::model
