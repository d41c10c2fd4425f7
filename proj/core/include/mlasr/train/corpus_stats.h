#pragma once

#include <string>
#include <vector>

namespace mlasr::train {

// Training data volume of the 15-language production corpus.
struct LanguageStat {
  std::string code;
  std::string name;
  std::string family;
  double utterances_millions = 0;
  double hours_thousands = 0;
};

const std::vector<LanguageStat>& FifteenLanguageStats();
// Stated corpus total; the rounded per-language counts sum to 231.5.
inline constexpr double kStatedTotalUtterancesMillions = 231.6;

}  // namespace mlasr::train
