#include "mlasr/nn/grad_check.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mlasr/common/error.h"
#include "mlasr/common/random.h"
#include "mlasr/nn/ops.h"

namespace mlasr::nn {
namespace {

constexpr std::size_t kMaxCheckedScalars = 10000;

Var Contract(Graph<double>& g, Var out, const Tensor<double>& weights) {
  if (g.value(out).size() == 1) return out;
  return Sum(g, Mul(g, out, g.Constant(weights)));
}

}  // namespace

double GradCheckReport::worst() const noexcept {
  double w = 0.0;
  for (const auto& [name, err] : max_relative_error) w = std::max(w, err);
  return w;
}

std::string GradCheckReport::worst_parameter() const {
  std::string name;
  double w = -1.0;
  for (const auto& [n, err] : max_relative_error) {
    if (err > w) {
      w = err;
      name = n;
    }
  }
  return name;
}

GradCheckReport GradientCheck(const GraphBuilder& build, ParameterSet<double>& params,
                              double epsilon, double tolerance, std::uint64_t seed) {
  if (epsilon <= 0.0) throw UsageError("gradient check epsilon must be positive");
  if (params.NumScalars() >= kMaxCheckedScalars) {
    throw UsageError(fmt::format("gradient check limited to {} scalars, got {}", kMaxCheckedScalars,
                                 params.NumScalars()));
  }
  GradCheckReport report;
  report.tolerance = tolerance;

  Graph<double> g;
  const Var raw = build(g, params);
  Rng rng(seed);
  Tensor<double> weights(g.value(raw).shape());
  for (double& w : weights.values()) w = StandardNormal(rng);
  const Var loss = Contract(g, raw, weights);
  if (params.size() == 0) return report;
  g.Backward(loss);
  Gradients<double> analytic(params);
  g.AccumulateParamGrads(params, analytic);

  auto evaluate = [&]() {
    Graph<double> probe;
    const Var out = Contract(probe, build(probe, params), weights);
    return probe.value(out)[0];
  };

  for (ParamId id = 0; id < params.size(); ++id) {
    Tensor<double>& value = params.value(id);
    double worst = 0.0, diff_sq = 0.0, analytic_sq = 0.0, numeric_sq = 0.0;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + epsilon;
      const double plus = evaluate();
      value[i] = saved - epsilon;
      const double minus = evaluate();
      value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = analytic[id][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
      diff_sq += (a - numeric) * (a - numeric);
      analytic_sq += a * a;
      numeric_sq += numeric * numeric;
    }
    const double norm_denom =
        std::max({std::sqrt(analytic_sq), std::sqrt(numeric_sq), 1e-8});
    report.max_relative_error[params.name(id)] = std::sqrt(diff_sq) / norm_denom;
    report.max_elementwise_error[params.name(id)] = worst;
  }
  return report;
}

}  // namespace mlasr::nn
