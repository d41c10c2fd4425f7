#include "mlasr/train/optimizer.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mlasr/common/error.h"

namespace mlasr::train {

void OptimizerConfig::Validate() const {
  auto unit = [](const char* what, double v) {
    if (!(v >= 0 && v < 1)) throw ConfigError(fmt::format("optimizer: {} must lie in [0, 1), got {}", what, v));
  };
  unit("beta1", beta1);
  unit("beta2", beta2);
  if (!(epsilon >= 0)) throw ConfigError("optimizer: epsilon must be >= 0");
  if (!(clip_threshold > 0)) throw ConfigError("optimizer: clip threshold must be > 0");
  if (!(epsilon1 >= 0)) throw ConfigError("optimizer: epsilon1 must be >= 0");
}

void ScheduleConfig::Validate() const {
  if (!(peak_lr > 0) || !std::isfinite(peak_lr)) {
    throw ConfigError(fmt::format("schedule: peak_lr must be positive, got {}", peak_lr));
  }
  if (warmup_steps < 1) {
    throw ConfigError(fmt::format("schedule: warmup_steps must be >= 1, got {}", warmup_steps));
  }
}

double LrAt(std::int64_t step, const ScheduleConfig& schedule) {
  if (step < 1) throw UsageError(fmt::format("lr_at: step must be >= 1, got {}", step));
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(schedule.warmup_steps);
  // Written so both branches are exactly peak_lr at step == warmup.
  if (step <= schedule.warmup_steps) return schedule.peak_lr * s / w;
  return schedule.peak_lr * std::sqrt(w / s);
}

template <typename T>
Optimizer<T>::Optimizer(const OptimizerConfig& config, const nn::ParameterSet<T>& params)
    : config_(config) {
  config_.Validate();
  slots_.reserve(params.size());
  for (nn::ParamId id = 0; id < params.size(); ++id) slots_.push_back(MakeSlots(params.value(id)));
}

template <typename T>
ParamSlots<T> Optimizer<T>::MakeSlots(const nn::Tensor<T>& value) const {
  ParamSlots<T> s;
  s.first = nn::Tensor<T>(value.shape());
  if (config_.kind == OptimizerKind::kAdafactor && IsFactored(static_cast<int>(value.rank()))) {
    s.row = nn::Tensor<T>({value.dim(0)});
    s.col = nn::Tensor<T>({value.dim(1)});
  } else {
    s.second = nn::Tensor<T>(value.shape());
  }
  return s;
}

template <typename T>
void Optimizer<T>::Update(nn::ParameterSet<T>& params, const nn::Gradients<T>& grads, double lr) {
  if (grads.size() != params.size() || slots_.size() != params.size()) {
    throw UsageError(fmt::format("optimizer: {} parameters, {} gradients, {} slots", params.size(),
                                 grads.size(), slots_.size()));
  }
  for (nn::ParamId id = 0; id < params.size(); ++id) {
    const nn::Tensor<T> delta = Delta(slots_[id], grads[id], lr);
    auto p = params.value(id).values();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += delta[i];
  }
}

template <typename T>
nn::Tensor<T> Optimizer<T>::Delta(ParamSlots<T>& slots, const nn::Tensor<T>& grad,
                                  double lr) const {
  if (!slots.first.SameShape(grad)) {
    throw ShapeError("optimizer: gradient shape does not match its slots");
  }
  ++slots.updates;
  return config_.kind == OptimizerKind::kAdam ? AdamDelta(slots, grad, lr)
                                              : AdafactorDelta(slots, grad, lr);
}

template <typename T>
nn::Tensor<T> Optimizer<T>::AdamDelta(ParamSlots<T>& s, const nn::Tensor<T>& g, double lr) const {
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.updates));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.updates));
  nn::Tensor<T> delta(g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double gi = g[i];
    const double m = b1 * s.first[i] + (1 - b1) * gi;
    const double v = b2 * s.second[i] + (1 - b2) * gi * gi;
    s.first[i] = static_cast<T>(m);
    s.second[i] = static_cast<T>(v);
    delta[i] = static_cast<T>(-lr * (m / c1) / (std::sqrt(v / c2) + config_.epsilon));
  }
  return delta;
}

template <typename T>
nn::Tensor<T> Optimizer<T>::AdafactorDelta(ParamSlots<T>& s, const nn::Tensor<T>& g,
                                           double lr) const {
  const double b1 = config_.beta1, b2 = config_.beta2, eps1 = config_.epsilon1;
  const double correction = 1.0 - std::pow(b2, static_cast<double>(s.updates));
  nn::Tensor<T> update(g.shape());
  if (!s.row.empty()) {
    const std::size_t rows = g.dim(0), cols = g.dim(1);
    std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double sq = double(g(r, c)) * g(r, c) + eps1;
        row_sum[r] += sq;
        col_sum[c] += sq;
      }
    }
    double row_total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      s.row[r] = static_cast<T>(b2 * s.row[r] + (1 - b2) * row_sum[r]);
      row_total += s.row[r];
    }
    for (std::size_t c = 0; c < cols; ++c) {
      s.col[c] = static_cast<T>(b2 * s.col[c] + (1 - b2) * col_sum[c]);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double v = double(s.row[r]) * s.col[c] / row_total / correction;
        update(r, c) = static_cast<T>(g(r, c) / std::sqrt(v));
      }
    }
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = b2 * s.second[i] + (1 - b2) * (double(g[i]) * g[i] + eps1);
      s.second[i] = static_cast<T>(v);
      update[i] = static_cast<T>(g[i] / std::sqrt(v / correction));
    }
  }
  double sq = 0;
  for (T u : update.values()) sq += double(u) * u;
  const double rms = update.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(update.size()));
  const double scale = 1.0 / std::max(1.0, rms / config_.clip_threshold);
  nn::Tensor<T> delta(g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double m = b1 * s.first[i] + (1 - b1) * update[i] * scale;
    s.first[i] = static_cast<T>(m);
    delta[i] = static_cast<T>(-lr * m);
  }
  return delta;
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace mlasr::train
