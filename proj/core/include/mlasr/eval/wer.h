#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mlasr::eval {

struct EditCounts {
  long long substitutions = 0;
  long long deletions = 0;
  long long insertions = 0;
  long long reference_words = 0;

  long long errors() const { return substitutions + deletions + insertions; }
  // Throws UsageError when no reference words were accumulated.
  double wer() const;
  EditCounts& operator+=(const EditCounts& other);
  bool operator==(const EditCounts&) const = default;
};

// Minimal unit-cost edit alignment. Among minimal alignments the one with the
// most substitutions wins; since D - I is fixed by the lengths, that settles
// the triple and amounts to preferring substitution, then insertion, then
// deletion. Throws UsageError on an empty reference.
EditCounts AlignWer(std::span<const std::string> reference,
                    std::span<const std::string> hypothesis);

// Scoring units: whitespace-separated words, or non-space graphemes for
// scripts written without spaces.
std::vector<std::string> ScoringUnits(std::string_view text, bool space_free);

// Primary language subtags scored at grapheme level by default.
const std::set<std::string>& DefaultSpaceFreeLanguages();
bool IsSpaceFree(std::string_view language_code, const std::set<std::string>& space_free);

struct LanguageScore {
  EditCounts counts;
  long long utterances = 0;
};

class WerReport {
 public:
  void Add(const std::string& language, const EditCounts& counts);
  WerReport& operator+=(const WerReport& other);

  const std::map<std::string, LanguageScore>& languages() const { return languages_; }
  // Unweighted mean of per-language WERs.
  double average_wer() const;
  // Pooled errors over pooled reference words.
  double weighted_wer() const;

  // One JSON object per language, then one summary object.
  std::string ToJsonLines() const;
  std::string RenderTable() const;

 private:
  std::map<std::string, LanguageScore> languages_;
};

}  // namespace mlasr::eval
