#include "mlasr/train/corpus_stats.h"

namespace mlasr::train {

const std::vector<LanguageStat>& FifteenLanguageStats() {
  static const std::vector<LanguageStat> stats = {
      {"en-US", "English (US)", "Germanic", 34.6, 53.5},
      {"en-IN", "English (IN)", "Germanic", 17.9, 27.1},
      {"es-US", "Spanish (US)", "Italic", 31.3, 47.6},
      {"pt-BR", "Portuguese (BR)", "Italic", 17.9, 32.9},
      {"es-ES", "Spanish (ES)", "Italic", 16.1, 23.5},
      {"ar-GULF", "Arabic (GULF)", "Afro-Asiatic", 7.7, 11.9},
      {"ar-EG", "Arabic (EG)", "Afro-Asiatic", 7.6, 11.9},
      {"hi-IN", "Hindi (IN)", "Indo-Iranian", 19.8, 32.3},
      {"mr-IN", "Marathi (IN)", "Indo-Iranian", 11.4, 16.7},
      {"bn-BD", "Bengali (BD)", "Indo-Iranian", 8.6, 16.5},
      {"zh-TW", "Chinese (TW)", "Sino-Tibetan", 17.2, 22.8},
      {"ru-RU", "Russian (RU)", "Balto-Slavic", 14.8, 22.8},
      {"tr-TR", "Turkish (TR)", "Turkic", 15.5, 22.1},
      {"hu-HU", "Hungarian (HU)", "Uralic", 6.5, 9.9},
      {"ms-MY", "Malay (MY)", "Austronesian", 4.6, 7.6},
  };
  return stats;
}

}  // namespace mlasr::train
