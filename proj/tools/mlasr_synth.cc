// mlasr-synth: writes the toy multilingual corpus (feature files plus a
// manifest) that the CLI can train and evaluate on.

#include <iostream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "mlasr/common/error.h"
#include "mlasr/train/synthetic.h"

int main(int argc, char** argv) {
  using namespace mlasr;
  CLI::App app{"mlasr-synth: deterministic toy corpus with fixed feature patterns per grapheme"};
  train::SyntheticOptions o;
  std::string output;
  std::string languages;
  app.add_option("-o,--output", output, "output directory")->required();
  app.add_option("--utterances", o.utterances_per_language, "utterances per language")
      ->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--languages", languages, "comma-separated subset of en,ru,zh (default: all)");
  app.add_option("--lexicon", o.lexicon_size, "words per language")
      ->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--max-words", o.max_words, "words per utterance at most")
      ->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--noise", o.noise, "feature noise standard deviation")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  app.add_option("--structure-seed", o.structure_seed, "seed for prototypes and lexicons")
      ->capture_default_str();
  app.add_option("--sample-seed", o.sample_seed, "seed for utterance sampling; vary per split")
      ->capture_default_str();
  app.add_option("--id-prefix", o.id_prefix, "utterance id prefix")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "mlasr-synth: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (!languages.empty()) {
      std::vector<train::SyntheticLanguage> chosen;
      std::string rest = languages + ",";
      for (std::size_t pos; (pos = rest.find(',')) != std::string::npos; rest.erase(0, pos + 1)) {
        const std::string code = rest.substr(0, pos);
        if (code.empty()) continue;
        bool found = false;
        for (const auto& l : train::DefaultSyntheticLanguages()) {
          if (l.code == code) {
            chosen.push_back(l);
            found = true;
          }
        }
        if (!found) throw UsageError(fmt::format("no synthetic language '{}'", code));
      }
      o.languages = std::move(chosen);
    }
    if (o.min_words > o.max_words) o.min_words = o.max_words;
    const auto utterances = train::GenerateSynthetic(o);
    const auto manifest = train::WriteSyntheticCorpus(utterances, output);
    fmt::print("{} utterances -> {}\n", utterances.size(), manifest);
  } catch (const mlasr::Error& e) {
    std::cerr << "mlasr-synth: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
