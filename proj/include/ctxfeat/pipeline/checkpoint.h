#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxfeat/netblocks/netblocks.h"
#include "ctxfeat/netblocks/parameters.h"

namespace ctxfeat {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
// Structurally invalid content behind a valid header.
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct Checkpoint {
  ModelConfig model;
  Parameters params;
  // Adam first and second moments, aligned with params; empty before the
  // first optimizer step.
  std::vector<std::vector<double>> adam_m;
  std::vector<std::vector<double>> adam_v;
  std::uint64_t step = 0;
  // Textual std::mt19937_64 state.
  std::string rng_state;
};

inline constexpr char kCheckpointMagic[8] = {'C', 'T', 'X', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Little-endian layout:
//   magic[8] "CTXFCKPT", u32 version
//   model:  u32 descriptor_dim, u32 n, u32 backbone_channels[n],
//           u32 semantic_channels, u32 semantic_branches, u64 seed,
//           u8 detach_score_mask
//   u32 parameter count, then per parameter:
//           u32 name length, name bytes, u32 rank, u32 dims[rank],
//           f64 values[prod(dims)]
//   u8 has_moments, then per parameter (if set): f64 m[size], f64 v[size]
//   u64 step, u32 rng length, rng bytes
std::string SerializeCheckpoint(const Checkpoint& checkpoint);
Checkpoint DeserializeCheckpoint(const std::string& bytes);

// Writes to a temporary file in the same directory, then renames.
void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

// Writes `contents` to `path` atomically (temp file + rename).
void WriteFileAtomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace ctxfeat
