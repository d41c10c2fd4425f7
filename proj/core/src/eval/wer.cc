#include "mlasr/eval/wer.h"

#include <fmt/format.h>

#include "json.hpp"

#include "mlasr/common/error.h"
#include "mlasr/vocab/vocab.h"

namespace mlasr::eval {

double EditCounts::wer() const {
  if (reference_words <= 0) throw UsageError("WER undefined without reference words");
  return static_cast<double>(errors()) / static_cast<double>(reference_words);
}

EditCounts& EditCounts::operator+=(const EditCounts& other) {
  substitutions += other.substitutions;
  deletions += other.deletions;
  insertions += other.insertions;
  reference_words += other.reference_words;
  return *this;
}

EditCounts AlignWer(std::span<const std::string> reference,
                    std::span<const std::string> hypothesis) {
  if (reference.empty()) throw UsageError("WER alignment needs a nonempty reference");
  const std::size_t n = reference.size(), m = hypothesis.size();

  struct Cell {
    long long cost = 0;
    long long subs = 0;
    long long dels = 0;
    // Lower cost first, then more substitutions.
    bool BetterThan(const Cell& o) const {
      return cost != o.cost ? cost < o.cost : subs > o.subs;
    }
  };
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {static_cast<long long>(j), 0, 0};
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = {static_cast<long long>(i), 0, static_cast<long long>(i)};
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = reference[i - 1] == hypothesis[j - 1];
      Cell best = prev[j - 1];
      if (!same) {
        best.cost += 1;
        best.subs += 1;
      }
      Cell ins = cur[j - 1];
      ins.cost += 1;
      if (ins.BetterThan(best)) best = ins;
      Cell del = prev[j];
      del.cost += 1;
      del.dels += 1;
      if (del.BetterThan(best)) best = del;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const Cell& end = prev[m];
  EditCounts out;
  out.substitutions = end.subs;
  out.deletions = end.dels;
  out.insertions = end.cost - end.subs - end.dels;
  out.reference_words = static_cast<long long>(n);
  return out;
}

std::vector<std::string> ScoringUnits(std::string_view text, bool space_free) {
  std::vector<std::string> units;
  std::string word;
  for (auto& g : vocab::SplitGraphemes(text)) {
    if (vocab::IsWhitespaceGrapheme(g)) {
      if (!word.empty()) units.push_back(std::move(word));
      word.clear();
    } else if (space_free) {
      units.push_back(std::move(g));
    } else {
      word += g;
    }
  }
  if (!word.empty()) units.push_back(std::move(word));
  return units;
}

const std::set<std::string>& DefaultSpaceFreeLanguages() {
  // "my" is left out: Malay is often tagged with the region MY.
  static const std::set<std::string> codes = {"zh", "ja", "th", "lo", "km", "yue", "cmn"};
  return codes;
}

bool IsSpaceFree(std::string_view language_code, const std::set<std::string>& space_free) {
  const auto cut = language_code.find_first_of("-_");
  std::string primary(language_code.substr(0, cut));
  for (char& c : primary) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return space_free.contains(primary);
}

void WerReport::Add(const std::string& language, const EditCounts& counts) {
  auto& score = languages_[language];
  score.counts += counts;
  score.utterances += 1;
}

WerReport& WerReport::operator+=(const WerReport& other) {
  for (const auto& [language, score] : other.languages_) {
    auto& mine = languages_[language];
    mine.counts += score.counts;
    mine.utterances += score.utterances;
  }
  return *this;
}

double WerReport::average_wer() const {
  if (languages_.empty()) throw UsageError("empty WER report");
  double sum = 0;
  for (const auto& [language, score] : languages_) sum += score.counts.wer();
  return sum / static_cast<double>(languages_.size());
}

double WerReport::weighted_wer() const {
  EditCounts pooled;
  for (const auto& [language, score] : languages_) pooled += score.counts;
  return pooled.wer();
}

std::string WerReport::ToJsonLines() const {
  std::string out;
  for (const auto& [language, score] : languages_) {
    const auto& c = score.counts;
    nlohmann::json record = {{"type", "language"},
                             {"language", language},
                             {"utterances", score.utterances},
                             {"substitutions", c.substitutions},
                             {"deletions", c.deletions},
                             {"insertions", c.insertions},
                             {"reference_words", c.reference_words},
                             {"wer", c.wer()}};
    out += record.dump() + "\n";
  }
  nlohmann::json summary = {{"type", "summary"},
                            {"languages", languages_.size()},
                            {"average_wer", average_wer()},
                            {"weighted_wer", weighted_wer()}};
  out += summary.dump() + "\n";
  return out;
}

std::string WerReport::RenderTable() const {
  std::string out = fmt::format("{:<12} {:>6} {:>8} {:>6} {:>6} {:>6} {:>8}\n", "language", "utts",
                                "words", "sub", "del", "ins", "WER%");
  for (const auto& [language, score] : languages_) {
    const auto& c = score.counts;
    out += fmt::format("{:<12} {:>6} {:>8} {:>6} {:>6} {:>6} {:>8.2f}\n", language,
                       score.utterances, c.reference_words, c.substitutions, c.deletions,
                       c.insertions, 100.0 * c.wer());
  }
  out += fmt::format("{:<12} {:>46.2f}\n", "average", 100.0 * average_wer());
  out += fmt::format("{:<12} {:>46.2f}\n", "pooled", 100.0 * weighted_wer());
  return out;
}

}  // namespace mlasr::eval
