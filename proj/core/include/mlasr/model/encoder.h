#pragma once

#include <vector>

#include "mlasr/model/config.h"
#include "mlasr/model/layers.h"

namespace mlasr::model {

// Conformer encoder: input projection, block 1 (4 layers, time stacking),
// block 2 (1 layer at twice the width, projection back), block 3 (the rest).
// Conditioning is a one-hot suffix on the features or a residual adapter
// after every layer.
template <typename T>
class Encoder {
 public:
  Encoder(const EncoderConfig& config, ParameterSet<T>& ps, Rng& rng);

  // features: T x 240 -> ceil(T/2) x model_dim.
  Var operator()(Graph<T>& g, const ParameterSet<T>& ps, const Tensor<T>& features,
                 int language) const;

  // Input rows as fed to the projection (features plus the one-hot suffix).
  Tensor<T> ConditionedInput(const Tensor<T>& features, int language) const;

  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  Linear<T> input_projection_;
  std::vector<ConformerLayer<T>> layers_;
  Linear<T> block2_projection_;
  // adapters_[layer][entry]
  std::vector<std::vector<Adapter<T>>> adapters_;
};

}  // namespace mlasr::model
