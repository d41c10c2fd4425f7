#pragma once

#include <string>
#include <string_view>

#include "mlasr/common/error.h"

namespace mlasr {

enum class OptimizerKind { kAdam, kAdafactor };

inline std::string ToString(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "adafactor";
}

inline OptimizerKind ParseOptimizerKind(std::string_view text) {
  if (text == "adam") return OptimizerKind::kAdam;
  if (text == "adafactor") return OptimizerKind::kAdafactor;
  throw ConfigError("unknown optimizer '" + std::string(text) + "' (adam|adafactor)");
}

// Adafactor keeps row and column statistics for rank-2 tensors only.
inline bool IsFactored(std::size_t rank) { return rank == 2; }

}  // namespace mlasr
