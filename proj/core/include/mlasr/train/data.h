#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mlasr/frontend/features.h"
#include "mlasr/vocab/vocab.h"

namespace mlasr::train {

// One manifest line. Exactly one of audio_path / feature_path is set.
struct UtteranceRecord {
  std::string id;
  std::string language_code;
  std::string audio_path;
  std::string feature_path;
  std::string transcript;
};

// JSON lines; blank lines are skipped. Relative paths resolve against
// base_dir. Throws IoError naming the line on malformed records.
std::vector<UtteranceRecord> ParseManifest(std::string_view text, const std::string& base_dir = "",
                                           std::string_view origin = "manifest");
std::vector<UtteranceRecord> LoadManifest(const std::string& path);
std::string ManifestLine(const UtteranceRecord& record);

// Ordered language codes; the position is the model's language id.
class LanguageTable {
 public:
  LanguageTable() = default;
  explicit LanguageTable(std::vector<std::string> codes);
  // Codes in order of first appearance.
  static LanguageTable FromRecords(const std::vector<UtteranceRecord>& records);

  int size() const { return static_cast<int>(codes_.size()); }
  const std::string& code(int id) const { return codes_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& codes() const { return codes_; }
  // Throws UsageError for codes outside the table.
  int Id(std::string_view code) const;
  bool Contains(std::string_view code) const;
  // True when this table's codes are the leading codes of `other`.
  bool IsPrefixOf(const LanguageTable& other) const;
  bool operator==(const LanguageTable&) const = default;

 private:
  std::vector<std::string> codes_;
};

// 240-D stacked frames for a record, from its feature file (80-D or 240-D)
// or by running the log-Mel frontend on its WAV file.
frontend::FeatureFrames LoadFeatures(const UtteranceRecord& record);

struct Example {
  std::string id;
  int language = 0;
  nn::Tensor<float> features;  // T x 240, normalized
  std::vector<int> tokens;     // [begin, ..., end]
  std::string transcript;
};

// Featurized, tokenized examples held in memory and indexed by language.
class Dataset {
 public:
  Dataset() = default;
  // Fits the normalizer on these records unless one is supplied.
  static Dataset Build(const std::vector<UtteranceRecord>& records, const LanguageTable& languages,
                       const vocab::GraphemeVocab& vocab,
                       const frontend::FeatureNormalizer* normalizer = nullptr);
  static Dataset FromExamples(std::vector<Example> examples, int num_languages,
                              frontend::FeatureNormalizer normalizer = {});

  std::size_t size() const { return examples_.size(); }
  const Example& operator[](std::size_t i) const { return examples_.at(i); }
  const std::vector<Example>& examples() const { return examples_; }
  // Example indices per language id.
  const std::vector<std::vector<std::size_t>>& by_language() const { return by_language_; }
  std::vector<double> LanguageCounts() const;
  const frontend::FeatureNormalizer& normalizer() const { return normalizer_; }

 private:
  std::vector<Example> examples_;
  std::vector<std::vector<std::size_t>> by_language_;
  frontend::FeatureNormalizer normalizer_;
};

}  // namespace mlasr::train
