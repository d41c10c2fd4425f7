#pragma once

#include <set>
#include <string>
#include <vector>

#include "mlasr/eval/wer.h"
#include "mlasr/model/model.h"
#include "mlasr/train/data.h"

namespace mlasr::eval {

struct EvaluateOptions {
  model::DecodeOptions decode;
  std::set<std::string> space_free = DefaultSpaceFreeLanguages();
  int threads = 1;
};

struct UtteranceScore {
  std::string id;
  std::string language;
  std::string reference;
  std::string hypothesis;
  EditCounts counts;
};

// Word-level counts, or grapheme-level for space-free languages.
EditCounts ScoreUtterance(std::string_view language_code, std::string_view reference,
                          std::string_view hypothesis, const std::set<std::string>& space_free);

// Decodes every example and scores it against its transcript. Per-utterance
// rows go to `details` in dataset order when it is non-null.
template <typename T>
WerReport Evaluate(const model::AsrModel<T>& model, const nn::ParameterSet<T>& params,
                   const vocab::GraphemeVocab& vocab, const train::LanguageTable& languages,
                   const train::Dataset& data, const EvaluateOptions& options = {},
                   std::vector<UtteranceScore>* details = nullptr);

// Featurizes manifest records with the training normalizer, then evaluates.
// Throws UsageError on an empty record list or a language outside the table.
template <typename T>
WerReport Evaluate(const model::AsrModel<T>& model, const nn::ParameterSet<T>& params,
                   const vocab::GraphemeVocab& vocab, const train::LanguageTable& languages,
                   const frontend::FeatureNormalizer& normalizer,
                   const std::vector<train::UtteranceRecord>& records,
                   const EvaluateOptions& options = {},
                   std::vector<UtteranceScore>* details = nullptr);

}  // namespace mlasr::eval
