#pragma once

#include <memory>
#include <span>
#include <vector>

#include "mlasr/model/beam_search.h"
#include "mlasr/model/config.h"
#include "mlasr/model/decoder.h"
#include "mlasr/model/encoder.h"

namespace mlasr::model {

// Decoder instance serving `language`: always 0 for single routing, the
// language's family id for per-family routing.
int Route(const DecoderConfig& config, int language);

struct DecodeOptions {
  int beam_size = 4;
  int max_len = 0;  // 0 selects 2 * encoder length + 10
};

// Encoder plus one decoder per routing instance. Parameters live in an
// external ParameterSet so training, checkpointing and planning can share
// them; constructing against a populated set binds instead of creating.
template <typename T>
class AsrModel {
 public:
  AsrModel(const ModelConfig& config, ParameterSet<T>& ps, Rng& rng);

  const ModelConfig& config() const { return config_; }
  const Encoder<T>& encoder() const { return encoder_; }
  const Decoder<T>& decoder(int instance) const { return *decoders_.at(instance); }
  int num_decoders() const { return static_cast<int>(decoders_.size()); }
  int Route(int language) const;

  Var Encode(Graph<T>& g, const ParameterSet<T>& ps, const Tensor<T>& features,
             int language) const;
  // Teacher-forced logits for inputs that start with the begin id.
  Var Logits(Graph<T>& g, const ParameterSet<T>& ps, Var encoder_out,
             std::span<const int> inputs, int language) const;
  // Summed negative log-likelihood of tokens[1:] given tokens[:-1]; tokens
  // are framed as [begin, ..., end]. Returns shape {1}.
  Var Loss(Graph<T>& g, const ParameterSet<T>& ps, const Tensor<T>& features, int language,
           std::span<const int> tokens) const;

  Hypothesis Decode(const ParameterSet<T>& ps, const Tensor<T>& features, int language,
                    const DecodeOptions& options = {}) const;

 private:
  ModelConfig config_;
  Encoder<T> encoder_;
  std::vector<std::unique_ptr<Decoder<T>>> decoders_;
};

extern template class AsrModel<float>;
extern template class AsrModel<double>;

}  // namespace mlasr::model
