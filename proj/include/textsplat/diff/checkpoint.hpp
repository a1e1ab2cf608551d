#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "textsplat/diff/params.hpp"
#include "textsplat/util/binary_io.hpp"

// Checkpoint container:
//   "ASPT" | version u32 | record*
//   record = name_len u32 | name bytes | dtype u8 | rank u32 | extents u32[rank] | payload
// Payload scalars are little-endian f32 or f64. Optimizer moments are stored
// as "opt.m.<name>" / "opt.v.<name>" plus a scalar "opt.step".
namespace textsplat::diff {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<double> values;  // exact for both dtypes
};

using CheckpointError = util::FormatError;

void write_checkpoint_records(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint_records(const std::filesystem::path& path);

template <typename T>
void save_checkpoint(const ParameterStore<T>& store, const std::filesystem::path& path);

// Loads into an already-built store. Every store entry must be present with an
// identical shape; unknown non-optimizer records are rejected.
template <typename T>
void load_checkpoint(ParameterStore<T>& store, const std::filesystem::path& path);

}  // namespace textsplat::diff
