#include "mlasr/eval/evaluate.h"

#include <algorithm>
#include <thread>

#include "mlasr/common/error.h"

namespace mlasr::eval {

EditCounts ScoreUtterance(std::string_view language_code, std::string_view reference,
                          std::string_view hypothesis, const std::set<std::string>& space_free) {
  const bool sf = IsSpaceFree(language_code, space_free);
  return AlignWer(ScoringUnits(reference, sf), ScoringUnits(hypothesis, sf));
}

template <typename T>
WerReport Evaluate(const model::AsrModel<T>& model, const nn::ParameterSet<T>& params,
                   const vocab::GraphemeVocab& vocab, const train::LanguageTable& languages,
                   const train::Dataset& data, const EvaluateOptions& options,
                   std::vector<UtteranceScore>* details) {
  if (data.size() == 0) throw UsageError("evaluate: no utterances");
  if (vocab.size() != model.config().vocab_size) {
    throw UsageError("evaluate: vocabulary size does not match the model");
  }
  std::vector<UtteranceScore> scores(data.size());
  auto score_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& e = data[i];
      const auto hyp = model.Decode(params, nn::Cast<T>(e.features), e.language, options.decode);
      auto& s = scores[i];
      s.id = e.id;
      s.language = languages.code(e.language);
      s.reference = e.transcript;
      s.hypothesis = vocab.Decode(hyp.Body());
      s.counts = ScoreUtterance(s.language, s.reference, s.hypothesis, options.space_free);
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, options.threads));
  if (threads == 1) {
    score_range(0, data.size());
  } else {
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          try {
            score_range(data.size() * t / threads, data.size() * (t + 1) / threads);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  WerReport report;
  for (const auto& s : scores) report.Add(s.language, s.counts);
  if (details != nullptr) *details = std::move(scores);
  return report;
}

template <typename T>
WerReport Evaluate(const model::AsrModel<T>& model, const nn::ParameterSet<T>& params,
                   const vocab::GraphemeVocab& vocab, const train::LanguageTable& languages,
                   const frontend::FeatureNormalizer& normalizer,
                   const std::vector<train::UtteranceRecord>& records,
                   const EvaluateOptions& options, std::vector<UtteranceScore>* details) {
  if (records.empty()) throw UsageError("evaluate: manifest has no utterances");
  const auto data = train::Dataset::Build(records, languages, vocab,
                                          normalizer.empty() ? nullptr : &normalizer);
  return Evaluate(model, params, vocab, languages, data, options, details);
}

#define MLASR_INSTANTIATE(T)                                                                     \
  template WerReport Evaluate<T>(const model::AsrModel<T>&, const nn::ParameterSet<T>&,          \
                                 const vocab::GraphemeVocab&, const train::LanguageTable&,       \
                                 const train::Dataset&, const EvaluateOptions&,                  \
                                 std::vector<UtteranceScore>*);                                  \
  template WerReport Evaluate<T>(const model::AsrModel<T>&, const nn::ParameterSet<T>&,          \
                                 const vocab::GraphemeVocab&, const train::LanguageTable&,       \
                                 const frontend::FeatureNormalizer&,                             \
                                 const std::vector<train::UtteranceRecord>&,                     \
                                 const EvaluateOptions&, std::vector<UtteranceScore>*);

MLASR_INSTANTIATE(float)
MLASR_INSTANTIATE(double)

#undef MLASR_INSTANTIATE

}  // namespace mlasr::eval
