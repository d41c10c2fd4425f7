#pragma once

#include <string_view>

#include "mlasr/common/random.h"
#include "mlasr/nn/parameters.h"

namespace mlasr::testing {

template <typename T>
nn::Tensor<T> RandomTensor(nn::Shape shape, Rng& rng, double scale = 1.0) {
  nn::Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(scale * StandardNormal(rng));
  return t;
}

// Overwrites every parameter (optionally only those whose name contains
// `filter`) with N(0, scale^2) draws so no path is structurally inactive.
template <typename T>
void Randomize(nn::ParameterSet<T>& ps, Rng& rng, double scale = 0.3,
               std::string_view filter = {}) {
  for (nn::ParamId id = 0; id < ps.size(); ++id) {
    if (!filter.empty() && ps.name(id).find(filter) == std::string::npos) continue;
    for (T& v : ps.value(id).values()) v = static_cast<T>(scale * StandardNormal(rng));
  }
}

// Zeroes parameters whose name contains `fragment`.
template <typename T>
int ZeroMatching(nn::ParameterSet<T>& ps, std::string_view fragment) {
  int hits = 0;
  for (nn::ParamId id = 0; id < ps.size(); ++id) {
    if (ps.name(id).find(fragment) == std::string::npos) continue;
    ps.value(id).Fill(T(0));
    ++hits;
  }
  return hits;
}

}  // namespace mlasr::testing
