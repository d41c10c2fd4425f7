#pragma once

#include <cstdint>
#include <vector>

#include "mlasr/common/optimizer_kind.h"
#include "mlasr/nn/parameters.h"

namespace mlasr::train {

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Adafactor only: RMS threshold for update clipping and the additive
  // floor on squared gradients.
  double clip_threshold = 1.0;
  double epsilon1 = 1e-30;

  static OptimizerConfig Adam() { return {}; }
  static OptimizerConfig Adafactor() {
    OptimizerConfig c;
    c.kind = OptimizerKind::kAdafactor;
    c.beta2 = 0.99;
    return c;
  }
  void Validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

struct ScheduleConfig {
  double peak_lr = 3e-4;
  std::int64_t warmup_steps = 10000;

  void Validate() const;
  bool operator==(const ScheduleConfig&) const = default;
};

// Linear warmup to peak_lr at warmup_steps, then inverse square root decay.
// step must be >= 1.
double LrAt(std::int64_t step, const ScheduleConfig& schedule);

// Optimizer state for one parameter. Adam and unfactored Adafactor use
// `second`; factored Adafactor keeps `row` (R) and `col` (C) instead.
template <typename T>
struct ParamSlots {
  nn::Tensor<T> first;
  nn::Tensor<T> second;
  nn::Tensor<T> row;
  nn::Tensor<T> col;
  std::int64_t updates = 0;

  std::size_t SecondMomentValues() const { return second.size() + row.size() + col.size(); }
  bool operator==(const ParamSlots&) const = default;
};

template <typename T>
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(const OptimizerConfig& config, const nn::ParameterSet<T>& params);

  const OptimizerConfig& config() const { return config_; }
  // Fresh, zeroed slots shaped for `value`.
  ParamSlots<T> MakeSlots(const nn::Tensor<T>& value) const;

  // params += delta for every parameter, slots advanced by one update.
  void Update(nn::ParameterSet<T>& params, const nn::Gradients<T>& grads, double lr);
  // The delta Update would add to one parameter; advances its slots.
  nn::Tensor<T> Delta(ParamSlots<T>& slots, const nn::Tensor<T>& grad, double lr) const;

  std::vector<ParamSlots<T>>& slots() { return slots_; }
  const std::vector<ParamSlots<T>>& slots() const { return slots_; }
  bool operator==(const Optimizer&) const = default;

 private:
  nn::Tensor<T> AdamDelta(ParamSlots<T>& s, const nn::Tensor<T>& g, double lr) const;
  nn::Tensor<T> AdafactorDelta(ParamSlots<T>& s, const nn::Tensor<T>& g, double lr) const;

  OptimizerConfig config_;
  std::vector<ParamSlots<T>> slots_;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace mlasr::train
