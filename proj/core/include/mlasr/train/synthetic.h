#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mlasr/nn/tensor.h"
#include "mlasr/train/data.h"

namespace mlasr::train {

struct SyntheticLanguage {
  std::string code;
  std::vector<std::string> graphemes;
  bool space_free = false;  // words are written without separators
};

// Latin, Cyrillic and Han toy alphabets of 16 graphemes each.
std::vector<SyntheticLanguage> DefaultSyntheticLanguages();

// Toy acoustic corpus with a fixed feature pattern per (language, grapheme):
// each grapheme sounds as `frames_per_grapheme` stacked frames of its
// prototype plus Gaussian noise, word gaps as one near-silent frame.
// `structure_seed` fixes prototypes and lexicons; `sample_seed` picks the
// utterances, so splits share one acoustic world.
struct SyntheticOptions {
  std::vector<SyntheticLanguage> languages = DefaultSyntheticLanguages();
  int utterances_per_language = 3000;
  int lexicon_size = 24;
  int min_word_length = 2;
  int max_word_length = 4;
  int min_words = 1;
  int max_words = 3;
  int frames_per_grapheme = 2;
  double noise = 0.25;
  std::uint64_t structure_seed = 17;
  std::uint64_t sample_seed = 1;
  std::string id_prefix = "syn";
};

struct SyntheticUtterance {
  std::string id;
  std::string language_code;
  std::string transcript;
  nn::Tensor<float> features;  // T x 240
};

std::vector<SyntheticUtterance> GenerateSynthetic(const SyntheticOptions& options);

// Writes one feature file per utterance under `directory` plus
// `directory/manifest.jsonl`; returns the manifest path.
std::string WriteSyntheticCorpus(const std::vector<SyntheticUtterance>& utterances,
                                 const std::string& directory);

// Examples without going through files or the normalizer.
Dataset SyntheticDataset(const std::vector<SyntheticUtterance>& utterances,
                         const LanguageTable& languages, const vocab::GraphemeVocab& vocab);

std::vector<vocab::TaggedText> Transcripts(const std::vector<SyntheticUtterance>& utterances);

}  // namespace mlasr::train
