#include "mlasr/train/mixing.h"

#include <cmath>

#include <fmt/format.h>

#include "mlasr/common/error.h"

namespace mlasr::train {

void MixingSchedule::Validate() const {
  if (weights.empty()) throw UsageError("mixing schedule has no languages");
  double total = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!std::isfinite(weights[i]) || weights[i] < 0) {
      throw UsageError(fmt::format("mixing weight for language {} must be finite and >= 0, got {}",
                                   i, weights[i]));
    }
    total += weights[i];
  }
  if (total <= 0) throw UsageError("mixing schedule needs at least one positive weight");
}

std::vector<double> MixingSchedule::Normalized() const {
  Validate();
  double total = 0;
  for (double w : weights) total += w;
  std::vector<double> out(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) out[i] = weights[i] / total;
  return out;
}

bool MixingSchedule::SameWeights(const MixingSchedule& other) const {
  return Normalized() == other.Normalized();
}

MixingSchedule NaturalSchedule(std::span<const double> counts) {
  MixingSchedule s;
  s.weights.assign(counts.begin(), counts.end());
  s.Validate();
  s.weights = s.Normalized();
  return s;
}

MixingSchedule BoostLanguage(int num_languages, int language, double weight) {
  if (num_languages < 2) throw UsageError("boosting needs at least two languages");
  if (language < 0 || language >= num_languages) {
    throw UsageError(fmt::format("language id {} outside {} languages", language, num_languages));
  }
  if (!(weight >= 0 && weight <= 1)) {
    throw UsageError(fmt::format("boost weight must lie in [0, 1], got {}", weight));
  }
  MixingSchedule s;
  s.weights.assign(static_cast<std::size_t>(num_languages), (1.0 - weight) / (num_languages - 1));
  s.weights[static_cast<std::size_t>(language)] = weight;
  s.Validate();
  return s;
}

std::vector<std::size_t> SampleBatch(std::span<const std::vector<std::size_t>> pools,
                                     const MixingSchedule& schedule, int batch_size, Rng& rng) {
  if (batch_size < 1) throw UsageError(fmt::format("batch size must be >= 1, got {}", batch_size));
  const auto p = schedule.Normalized();
  if (p.size() != pools.size()) {
    throw UsageError(fmt::format("mixing schedule covers {} languages, data has {}", p.size(),
                                 pools.size()));
  }
  std::vector<double> cdf(p.size());
  double acc = 0;
  int last_positive = -1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0 && pools[i].empty()) {
      throw UsageError(fmt::format("language {} has positive weight but no examples", i));
    }
    if (p[i] > 0) last_positive = static_cast<int>(i);
    acc += p[i];
    cdf[i] = acc;
  }
  std::vector<std::size_t> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    const double u = UniformUnit(rng);
    int lang = last_positive;
    for (std::size_t i = 0; i < cdf.size(); ++i) {
      if (u < cdf[i] && p[i] > 0) {
        lang = static_cast<int>(i);
        break;
      }
    }
    const auto& pool = pools[static_cast<std::size_t>(lang)];
    batch.push_back(pool[UniformIndex(rng, pool.size())]);
  }
  return batch;
}

}  // namespace mlasr::train
