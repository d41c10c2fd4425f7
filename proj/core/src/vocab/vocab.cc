#include "mlasr/vocab/vocab.h"

#include <algorithm>
#include <memory>
#include <set>

#include <fmt/format.h>
#include <unicode/brkiter.h>
#include <unicode/uchar.h>
#include <unicode/utf8.h>
#include <unicode/unistr.h>
#include <unicode/ustring.h>

#include "mlasr/common/binary_io.h"
#include "mlasr/common/error.h"
#include "mlasr/common/hash.h"

namespace mlasr::vocab {
namespace {

icu::BreakIterator& GraphemeIterator() {
  // Creating an iterator loads break rules; keep one per thread.
  thread_local std::unique_ptr<icu::BreakIterator> it = [] {
    UErrorCode status = U_ZERO_ERROR;
    std::unique_ptr<icu::BreakIterator> created(
        icu::BreakIterator::createCharacterInstance(icu::Locale::getRoot(), status));
    if (U_FAILURE(status) || !created) {
      throw Error(fmt::format("ICU grapheme iterator unavailable: {}", u_errorName(status)));
    }
    return created;
  }();
  return *it;
}

bool IsLineBreak(std::string_view g) { return g == "\n" || g == "\r" || g == "\r\n"; }

using Counts = std::map<std::string, long long>;

Counts CountGraphemes(std::span<const TaggedText> corpus) {
  Counts counts;
  for (const auto& item : corpus) {
    if (!IsValidUtf8(item.text)) {
      throw UsageError(fmt::format("transcript for language '{}' is not valid UTF-8", item.language));
    }
    for (auto& g : SplitGraphemes(item.text)) {
      if (!IsLineBreak(g)) ++counts[std::move(g)];
    }
  }
  return counts;
}

// Qualifying graphemes by descending count, then byte order (which for UTF-8
// is codepoint order).
std::vector<std::string> Ranked(const Counts& counts, int min_count) {
  std::vector<std::pair<std::string, long long>> kept;
  for (const auto& [g, n] : counts) {
    if (n >= min_count) kept.emplace_back(g, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  out.reserve(kept.size());
  for (auto& [g, n] : kept) out.push_back(std::move(g));
  return out;
}

}  // namespace

bool IsValidUtf8(std::string_view bytes) {
  UErrorCode status = U_ZERO_ERROR;
  int32_t length = 0;
  u_strFromUTF8(nullptr, 0, &length, bytes.data(), static_cast<int32_t>(bytes.size()), &status);
  return status == U_BUFFER_OVERFLOW_ERROR || status == U_STRING_NOT_TERMINATED_WARNING ||
         U_SUCCESS(status);
}

bool IsWhitespaceGrapheme(std::string_view grapheme) {
  if (grapheme.empty()) return false;
  int32_t i = 0;
  UChar32 c = 0;
  U8_NEXT(grapheme.data(), i, static_cast<int32_t>(grapheme.size()), c);
  return c >= 0 && u_isUWhiteSpace(c);
}

std::vector<std::string> SplitGraphemes(std::string_view utf8) {
  std::vector<std::string> out;
  if (utf8.empty()) return out;
  const icu::UnicodeString text =
      icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  icu::BreakIterator& it = GraphemeIterator();
  it.setText(text);
  for (int32_t start = it.first(), end = it.next(); end != icu::BreakIterator::DONE;
       start = end, end = it.next()) {
    std::string piece;
    text.tempSubStringBetween(start, end).toUTF8String(piece);
    out.push_back(std::move(piece));
  }
  return out;
}

void GraphemeVocab::Append(std::string token) {
  if (index_.contains(token)) throw Error(fmt::format("duplicate vocabulary token '{}'", token));
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

void GraphemeVocab::AddCoverage(std::span<const TaggedText> corpus) {
  std::map<std::string, std::set<int>> seen;
  for (const auto& item : corpus) {
    auto& ids = seen[item.language];
    for (const auto& g : SplitGraphemes(item.text)) {
      if (auto id = Find(g)) ids.insert(*id);
    }
  }
  for (const auto& [language, ids] : seen) {
    coverage_[language] = std::max(coverage_[language], static_cast<int>(ids.size()));
  }
}

GraphemeVocab GraphemeVocab::Build(std::span<const TaggedText> corpus, int min_count) {
  if (corpus.empty()) throw UsageError("cannot build a vocabulary from an empty corpus");
  if (min_count < 1) throw UsageError(fmt::format("min_count must be >= 1, got {}", min_count));
  GraphemeVocab vocab;
  vocab.min_count_ = min_count;
  for (auto special : kSpecialTokens) vocab.Append(std::string(special));
  for (auto& g : Ranked(CountGraphemes(corpus), min_count)) vocab.Append(std::move(g));
  vocab.AddCoverage(corpus);
  return vocab;
}

GraphemeVocab GraphemeVocab::Extend(std::span<const TaggedText> corpus, int min_count) const {
  GraphemeVocab extended = *this;
  if (corpus.empty()) return extended;
  if (min_count < 1) throw UsageError(fmt::format("min_count must be >= 1, got {}", min_count));
  for (auto& g : Ranked(CountGraphemes(corpus), min_count)) {
    if (!extended.index_.contains(g)) extended.Append(std::move(g));
  }
  extended.AddCoverage(corpus);
  return extended;
}

std::vector<int> GraphemeVocab::Encode(std::string_view text) const {
  std::vector<int> ids{kBeginId};
  for (const auto& g : SplitGraphemes(text)) ids.push_back(Find(g).value_or(kUnknownId));
  ids.push_back(kEndId);
  return ids;
}

std::string GraphemeVocab::Decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= size()) {
      throw UsageError(fmt::format("token id {} outside vocabulary of {}", id, size()));
    }
    if (id >= kNumSpecialTokens) out += tokens_[id];
  }
  return out;
}

const std::string& GraphemeVocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw UsageError(fmt::format("token id {} outside vocabulary of {}", id, size()));
  }
  return tokens_[id];
}

std::optional<int> GraphemeVocab::Find(std::string_view token) const {
  if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
  return std::nullopt;
}

std::uint64_t GraphemeVocab::Hash() const {
  Fnv1a64 h;
  for (const auto& t : tokens_) {
    h.Update(t);
    h.Update(std::string_view("\n"));
  }
  return h.digest();
}

std::string GraphemeVocab::Serialize() const {
  std::string out = "# mlasr grapheme vocabulary\n";
  out += fmt::format("# min_count {}\n", min_count_);
  out += fmt::format("# hash {}\n", HexDigest(Hash()));
  for (const auto& [language, n] : coverage_) out += fmt::format("# coverage {} {}\n", language, n);
  for (const auto& t : tokens_) out += t + "\n";
  return out;
}

GraphemeVocab GraphemeVocab::Parse(std::string_view text) {
  GraphemeVocab vocab;
  std::string expected_hash;
  bool in_header = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    if (nl == std::string_view::npos) throw IoError("vocabulary file: last line lacks a newline");
    const std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl + 1);
    if (in_header && line.starts_with("# ")) {
      const std::string_view body = line.substr(2);
      if (body.starts_with("min_count ")) {
        vocab.min_count_ = std::stoi(std::string(body.substr(10)));
      } else if (body.starts_with("hash ")) {
        expected_hash = std::string(body.substr(5));
      } else if (body.starts_with("coverage ")) {
        const std::string_view rest = body.substr(9);
        const auto space = rest.rfind(' ');
        if (space == std::string_view::npos) throw IoError("vocabulary file: bad coverage line");
        vocab.coverage_[std::string(rest.substr(0, space))] =
            std::stoi(std::string(rest.substr(space + 1)));
      }
      continue;
    }
    in_header = false;
    vocab.Append(std::string(line));
  }
  if (vocab.size() < kNumSpecialTokens) throw IoError("vocabulary file: missing special tokens");
  for (int i = 0; i < kNumSpecialTokens; ++i) {
    if (vocab.tokens_[i] != kSpecialTokens[i]) {
      throw IoError(fmt::format("vocabulary file: id {} must be '{}', found '{}'", i,
                                kSpecialTokens[i], vocab.tokens_[i]));
    }
  }
  if (!expected_hash.empty() && expected_hash != HexDigest(vocab.Hash())) {
    throw IoError(fmt::format("vocabulary file: hash {} does not match contents {}",
                              expected_hash, HexDigest(vocab.Hash())));
  }
  return vocab;
}

void GraphemeVocab::Save(const std::string& path) const { WriteFileBytes(path, Serialize()); }

GraphemeVocab GraphemeVocab::Load(const std::string& path) {
  try {
    return Parse(ReadFileBytes(path));
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace mlasr::vocab
