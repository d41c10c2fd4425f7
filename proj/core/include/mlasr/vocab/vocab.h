#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mlasr/common/tokens.h"

namespace mlasr::vocab {

// Extended grapheme clusters of a UTF-8 string, in order.
std::vector<std::string> SplitGraphemes(std::string_view utf8);
bool IsValidUtf8(std::string_view bytes);
// True when the cluster starts with a Unicode white-space codepoint.
bool IsWhitespaceGrapheme(std::string_view grapheme);

struct TaggedText {
  std::string language;
  std::string text;
};

// Token inventory: the four reserved specials, then graphemes by descending
// corpus frequency with ties in codepoint order. Immutable; Extend returns a
// new value whose existing ids are unchanged.
class GraphemeVocab {
 public:
  static constexpr std::string_view kSpecialTokens[kNumSpecialTokens] = {"<s>", "</s>", "<pad>",
                                                                         "<unk>"};

  static GraphemeVocab Build(std::span<const TaggedText> corpus, int min_count);
  GraphemeVocab Extend(std::span<const TaggedText> corpus, int min_count) const;

  // [begin, id per grapheme (unknown when absent), end]
  std::vector<int> Encode(std::string_view text) const;
  // Concatenates non-special tokens; throws on ids outside the vocabulary.
  std::string Decode(std::span<const int> ids) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  std::optional<int> Find(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  int min_count() const { return min_count_; }
  // Language -> number of distinct vocabulary tokens seen in its transcripts.
  const std::map<std::string, int>& language_coverage() const { return coverage_; }

  // FNV-1a over the token list; identifies the id assignment.
  std::uint64_t Hash() const;

  std::string Serialize() const;
  static GraphemeVocab Parse(std::string_view text);
  void Save(const std::string& path) const;
  static GraphemeVocab Load(const std::string& path);

  bool operator==(const GraphemeVocab& other) const {
    return tokens_ == other.tokens_ && min_count_ == other.min_count_ &&
           coverage_ == other.coverage_;
  }

 private:
  void Append(std::string token);
  void AddCoverage(std::span<const TaggedText> corpus);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int min_count_ = 1;
  std::map<std::string, int> coverage_;
};

}  // namespace mlasr::vocab
