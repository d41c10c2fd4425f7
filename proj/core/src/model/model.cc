#include "mlasr/model/model.h"

#include <fmt/format.h>

#include "mlasr/common/error.h"
#include "mlasr/common/tokens.h"

namespace mlasr::model {

int Route(const DecoderConfig& config, int language) {
  if (language < 0) throw UsageError(fmt::format("negative language id {}", language));
  if (config.routing == Routing::kSingle) return 0;
  if (language >= static_cast<int>(config.families.size())) {
    throw UsageError(fmt::format("language {} has no decoder family", language));
  }
  return config.families[language];
}

template <typename T>
AsrModel<T>::AsrModel(const ModelConfig& config, ParameterSet<T>& ps, Rng& rng)
    : config_(config), encoder_((config.Validate(), config.encoder), ps, rng) {
  const int instances = config_.decoder.num_instances();
  for (int k = 0; k < instances; ++k) {
    decoders_.push_back(MakeDecoder<T>(config_.decoder, config_.encoder.model_dim,
                                       config_.vocab_size, ps, rng, fmt::format("decoder/{}", k)));
  }
}

template <typename T>
int AsrModel<T>::Route(int language) const {
  if (language >= config_.num_languages()) {
    throw UsageError(fmt::format("language id {} outside the model's {} languages", language,
                                 config_.num_languages()));
  }
  return model::Route(config_.decoder, language);
}

template <typename T>
Var AsrModel<T>::Encode(Graph<T>& g, const ParameterSet<T>& ps, const Tensor<T>& features,
                        int language) const {
  return encoder_(g, ps, features, language);
}

template <typename T>
Var AsrModel<T>::Logits(Graph<T>& g, const ParameterSet<T>& ps, Var encoder_out,
                        std::span<const int> inputs, int language) const {
  return decoders_.at(Route(language))->Logits(g, ps, encoder_out, inputs);
}

template <typename T>
Var AsrModel<T>::Loss(Graph<T>& g, const ParameterSet<T>& ps, const Tensor<T>& features,
                      int language, std::span<const int> tokens) const {
  if (tokens.size() < 2) {
    throw ShapeError("loss: token sequence needs at least begin and end ids");
  }
  const Var enc = Encode(g, ps, features, language);
  const Var logits = Logits(g, ps, enc, tokens.first(tokens.size() - 1), language);
  return nn::SoftmaxCrossEntropy(g, logits, tokens.subspan(1));
}

template <typename T>
Hypothesis AsrModel<T>::Decode(const ParameterSet<T>& ps, const Tensor<T>& features,
                               int language, const DecodeOptions& options) const {
  Graph<T> g;
  const Tensor<T> enc = g.value(Encode(g, ps, features, language));
  auto scorer = decoders_.at(Route(language))->Scorer(ps, enc);
  BeamOptions beam{.beam_size = options.beam_size,
                   .max_len = options.max_len > 0 ? options.max_len
                                                  : 2 * static_cast<int>(enc.rows()) + 10,
                   .begin_id = kBeginId,
                   .end_id = kEndId};
  return BeamSearch(*scorer, beam);
}

template class AsrModel<float>;
template class AsrModel<double>;

}  // namespace mlasr::model
