#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "mlasr/train/trainer.h"

namespace mlasr::harness {

// Single-file training state:
//   "MLCK" | u32 version | u8 scalar bytes | model config text | u64 config
//   hash | train config text | u64 vocab hash | language codes | i64 step |
//   sampler and augment rng | schedule, history, audit | normalizer |
//   named parameters with shapes | optimizer slots | u64 FNV-1a of all
//   preceding bytes.
// Other versions are rejected rather than migrated.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
std::string SerializeCheckpoint(const train::TrainState<T>& state);
// Throws IoError on a bad magic, version, hash or truncated data and
// UsageError when the file holds the other scalar precision.
template <typename T>
train::TrainState<T> ParseCheckpoint(std::string_view bytes, std::string_view origin = "checkpoint");

template <typename T>
void SaveCheckpoint(const std::string& path, const train::TrainState<T>& state);
template <typename T>
train::TrainState<T> LoadCheckpoint(const std::string& path);

struct CheckpointInfo {
  std::uint32_t version = 0;
  int scalar_bytes = 0;  // 4 or 8
  std::int64_t step = 0;
  std::string model_config;
};
// Reads the header fields without loading tensors.
CheckpointInfo PeekCheckpoint(std::string_view bytes, std::string_view origin = "checkpoint");
CheckpointInfo PeekCheckpointFile(const std::string& path);

}  // namespace mlasr::harness
