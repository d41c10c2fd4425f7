#pragma once

#include <functional>
#include <map>
#include <string>

#include "mlasr/nn/graph.h"

namespace mlasr::nn {

struct GradCheckReport {
  // Parameter name -> |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
  // with Euclidean norms over the parameter tensor.
  std::map<std::string, double> max_relative_error;
  // Same ratio taken per scalar, then maximized. Diagnostic only: entries
  // whose gradient is below ~1e-7 are dominated by 64-bit roundoff.
  std::map<std::string, double> max_elementwise_error;
  double tolerance = 0.0;

  bool empty() const noexcept { return max_relative_error.empty(); }
  double worst() const noexcept;
  std::string worst_parameter() const;
  bool passed() const noexcept { return worst() < tolerance; }
};

// Builds the function under test from the current parameter values. The
// output may have any shape; non-scalar outputs are contracted against fixed
// pseudo-random weights so every output element contributes.
using GraphBuilder = std::function<Var(Graph<double>&, const ParameterSet<double>&)>;

// Central-difference check of every parameter in `params`. Requires fewer
// than 10^4 scalars in total. Parameter values are restored on return.
GradCheckReport GradientCheck(const GraphBuilder& build, ParameterSet<double>& params,
                              double epsilon, double tolerance, std::uint64_t seed = 17);

}  // namespace mlasr::nn
