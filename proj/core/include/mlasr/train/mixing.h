#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mlasr/common/random.h"

namespace mlasr::train {

// Per-language sampling weights indexed by language id. Weights need not sum
// to one; Normalized() does that at use.
struct MixingSchedule {
  std::vector<double> weights;
  // First step whose batch is drawn with these weights.
  std::int64_t effective_step = 1;

  // Throws UsageError on negative, non-finite or all-zero weights.
  void Validate() const;
  std::vector<double> Normalized() const;
  bool SameWeights(const MixingSchedule& other) const;
  bool operator==(const MixingSchedule&) const = default;
};

// Weights proportional to per-language utterance counts.
MixingSchedule NaturalSchedule(std::span<const double> counts);
// `language` gets `weight` and every other language (1 - weight) / (L - 1).
MixingSchedule BoostLanguage(int num_languages, int language, double weight);

// Draws batch_size example indices: each slot picks a language with the
// normalized weight (inverse CDF on one UniformUnit draw), then an utterance
// uniformly within it. Throws UsageError if a positive-weight language has
// no examples.
std::vector<std::size_t> SampleBatch(std::span<const std::vector<std::size_t>> pools,
                                     const MixingSchedule& schedule, int batch_size, Rng& rng);

}  // namespace mlasr::train
