#include "mlasr/model/encoder.h"

#include <algorithm>

#include <fmt/format.h>

#include "mlasr/common/error.h"

namespace mlasr::model {

namespace {

constexpr int kBlock1Layers = 4;

int BlockOf(int layer) {
  if (layer < kBlock1Layers) return 1;
  return layer == kBlock1Layers ? 2 : 3;
}

}  // namespace

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& config, ParameterSet<T>& ps, Rng& rng)
    : config_(config) {
  config_.Validate();
  const int d = config_.model_dim;
  input_projection_ = Linear<T>(ps, rng, "encoder/input_projection", config_.input_dim(), d);
  for (int i = 0; i < config_.num_layers; ++i) {
    const int width = BlockOf(i) == 2 ? 2 * d : d;
    const ConformerShape shape{.dim = width,
                               .heads = config_.attention_heads,
                               .kernel = config_.conv_kernel,
                               .ffn_hidden = config_.ffn_hidden(width),
                               .groups = config_.group_norm_groups,
                               .relative = config_.relative_position_attention};
    layers_.emplace_back(ps, rng, fmt::format("encoder/block{}/layer{}", BlockOf(i), i), shape);
    if (i == kBlock1Layers) {
      block2_projection_ = Linear<T>(ps, rng, "encoder/block2/projection", 2 * d, d);
    }
  }
  adapters_.resize(config_.num_layers);
  for (int i = 0; i < config_.num_layers; ++i) {
    const int width = BlockOf(i) == 2 ? 2 * d : d;
    for (int e = 0; e < config_.adapter_entries(); ++e) {
      const std::string entry =
          config_.conditioning == Conditioning::kSharedAdapter ? "shared" : fmt::format("lang{}", e);
      adapters_[i].emplace_back(ps, rng, fmt::format("encoder/adapter/layer{}/{}", i, entry),
                                width, config_.bottleneck());
    }
  }
}

template <typename T>
Tensor<T> Encoder<T>::ConditionedInput(const Tensor<T>& features, int language) const {
  if (language < 0 || language >= config_.num_languages) {
    throw UsageError(fmt::format("language id {} outside the model's {} languages", language,
                                 config_.num_languages));
  }
  if (features.rank() != 2 || features.cols() != static_cast<std::size_t>(kAcousticDim)) {
    throw ShapeError(fmt::format("encoder: expected T x {} features, got {}", kAcousticDim,
                                 nn::ShapeString(features.shape())));
  }
  if (features.rows() == 0) throw ShapeError("encoder: empty feature sequence");
  if (config_.conditioning != Conditioning::kBiasConcat) return features;
  const std::size_t rows = features.rows(), width = config_.input_dim();
  Tensor<T> out({rows, width});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(features.row(r).data(), kAcousticDim, out.row(r).data());
    out(r, kAcousticDim + language) = T(1);
  }
  return out;
}

template <typename T>
Var Encoder<T>::operator()(Graph<T>& g, const ParameterSet<T>& ps, const Tensor<T>& features,
                           int language) const {
  Var h = input_projection_(g, ps, g.Input("features", ConditionedInput(features, language)));
  const int entry = config_.conditioning == Conditioning::kSharedAdapter ? 0 : language;
  for (int i = 0; i < config_.num_layers; ++i) {
    h = layers_[i](g, ps, h);
    if (config_.has_adapters()) h = adapters_[i][entry](g, ps, h);
    if (i == kBlock1Layers - 1) h = TimeStack(g, h);
    if (i == kBlock1Layers) h = block2_projection_(g, ps, h);
  }
  return h;
}

template class Encoder<float>;
template class Encoder<double>;

}  // namespace mlasr::model
