#include "mlasr/train/data.h"

#include <algorithm>
#include <filesystem>

#include <fmt/format.h>

#include "json.hpp"
#include "mlasr/common/binary_io.h"
#include "mlasr/common/error.h"
#include "mlasr/frontend/audio_io.h"

namespace mlasr::train {
namespace {

std::string Resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(base_dir) / path).string();
}

}  // namespace

std::vector<UtteranceRecord> ParseManifest(std::string_view text, const std::string& base_dir,
                                           std::string_view origin) {
  std::vector<UtteranceRecord> records;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto fail = [&](const std::string& why) {
      return IoError(fmt::format("{}:{}: {}", origin, line_no, why));
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(e.what());
    }
    if (!j.is_object()) throw fail("record is not an object");
    auto field = [&](const char* key, bool required) -> std::string {
      if (!j.contains(key)) {
        if (required) throw fail(fmt::format("missing field '{}'", key));
        return {};
      }
      if (!j[key].is_string()) throw fail(fmt::format("field '{}' is not a string", key));
      return j[key].get<std::string>();
    };
    UtteranceRecord r;
    r.id = field("id", true);
    r.language_code = field("language_code", true);
    r.transcript = field("transcript", true);
    r.audio_path = Resolve(field("audio_path", false), base_dir);
    r.feature_path = Resolve(field("feature_path", false), base_dir);
    if (r.audio_path.empty() == r.feature_path.empty()) {
      throw fail("exactly one of audio_path and feature_path is required");
    }
    if (r.language_code.empty()) throw fail("empty language_code");
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<UtteranceRecord> LoadManifest(const std::string& path) {
  const auto base = std::filesystem::path(path).parent_path().string();
  return ParseManifest(ReadFileBytes(path), base, path);
}

std::string ManifestLine(const UtteranceRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["language_code"] = r.language_code;
  if (!r.audio_path.empty()) j["audio_path"] = r.audio_path;
  if (!r.feature_path.empty()) j["feature_path"] = r.feature_path;
  j["transcript"] = r.transcript;
  return j.dump();
}

LanguageTable::LanguageTable(std::vector<std::string> codes) : codes_(std::move(codes)) {
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    if (codes_[i].empty()) throw UsageError("language table: empty code");
    if (std::find(codes_.begin(), codes_.begin() + static_cast<std::ptrdiff_t>(i), codes_[i]) !=
        codes_.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw UsageError(fmt::format("language table: duplicate code '{}'", codes_[i]));
    }
  }
}

LanguageTable LanguageTable::FromRecords(const std::vector<UtteranceRecord>& records) {
  std::vector<std::string> codes;
  for (const auto& r : records) {
    if (std::find(codes.begin(), codes.end(), r.language_code) == codes.end()) {
      codes.push_back(r.language_code);
    }
  }
  return LanguageTable(std::move(codes));
}

int LanguageTable::Id(std::string_view code) const {
  const auto it = std::find(codes_.begin(), codes_.end(), code);
  if (it == codes_.end()) {
    throw UsageError(fmt::format("language '{}' is not in the model's language table", code));
  }
  return static_cast<int>(it - codes_.begin());
}

bool LanguageTable::IsPrefixOf(const LanguageTable& other) const {
  return other.codes_.size() >= codes_.size() &&
         std::equal(codes_.begin(), codes_.end(), other.codes_.begin());
}

bool LanguageTable::Contains(std::string_view code) const {
  return std::find(codes_.begin(), codes_.end(), code) != codes_.end();
}

frontend::FeatureFrames LoadFeatures(const UtteranceRecord& record) {
  frontend::FeatureFrames frames;
  if (!record.feature_path.empty()) {
    frames = frontend::ReadFeatureFile(record.feature_path);
  } else {
    const auto audio = frontend::ReadWav(record.audio_path);
    frames = frontend::ComputeLogMel(audio.samples, audio.sample_rate);
  }
  if (frames.dim() == frontend::kMelBins) frames = frontend::StackAndSubsample(frames);
  if (frames.num_frames() == 0) throw IoError(fmt::format("utterance '{}' has no frames", record.id));
  return frames;
}

Dataset Dataset::Build(const std::vector<UtteranceRecord>& records, const LanguageTable& languages,
                       const vocab::GraphemeVocab& vocab,
                       const frontend::FeatureNormalizer* normalizer) {
  std::vector<Example> examples;
  examples.reserve(records.size());
  for (const auto& r : records) {
    Example e;
    e.id = r.id;
    e.language = languages.Id(r.language_code);
    e.features = LoadFeatures(r).frames;
    e.tokens = vocab.Encode(r.transcript);
    e.transcript = r.transcript;
    examples.push_back(std::move(e));
  }
  frontend::FeatureNormalizer fitted;
  if (normalizer != nullptr) {
    fitted = *normalizer;
  } else {
    std::vector<nn::Tensor<float>> feats;
    feats.reserve(examples.size());
    for (const auto& e : examples) feats.push_back(e.features);
    if (!feats.empty()) fitted = frontend::FeatureNormalizer::Fit(feats);
  }
  for (auto& e : examples) fitted.Apply(e.features);
  return FromExamples(std::move(examples), languages.size(), std::move(fitted));
}

Dataset Dataset::FromExamples(std::vector<Example> examples, int num_languages,
                              frontend::FeatureNormalizer normalizer) {
  Dataset d;
  d.by_language_.resize(static_cast<std::size_t>(num_languages));
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const int lang = examples[i].language;
    if (lang < 0 || lang >= num_languages) {
      throw UsageError(fmt::format("example '{}' has language id {} outside {} languages",
                                   examples[i].id, lang, num_languages));
    }
    d.by_language_[static_cast<std::size_t>(lang)].push_back(i);
  }
  d.examples_ = std::move(examples);
  d.normalizer_ = std::move(normalizer);
  return d;
}

std::vector<double> Dataset::LanguageCounts() const {
  std::vector<double> counts;
  for (const auto& pool : by_language_) counts.push_back(static_cast<double>(pool.size()));
  return counts;
}

}  // namespace mlasr::train
