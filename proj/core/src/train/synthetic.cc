#include "mlasr/train/synthetic.h"

#include <filesystem>
#include <fstream>

#include <fmt/format.h>

#include "mlasr/common/error.h"
#include "mlasr/common/random.h"
#include "mlasr/frontend/audio_io.h"
#include "mlasr/model/config.h"

namespace mlasr::train {
namespace {

std::vector<std::string> Codepoints(char32_t first, int count) {
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) {
    const char32_t c = first + static_cast<char32_t>(i);
    std::string s;
    if (c < 0x80) {
      s += static_cast<char>(c);
    } else if (c < 0x800) {
      s += static_cast<char>(0xC0 | (c >> 6));
      s += static_cast<char>(0x80 | (c & 0x3F));
    } else {
      s += static_cast<char>(0xE0 | (c >> 12));
      s += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
      s += static_cast<char>(0x80 | (c & 0x3F));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<float> Prototype(Rng& rng) {
  std::vector<float> p(model::kAcousticDim);
  for (auto& v : p) v = static_cast<float>(StandardNormal(rng));
  return p;
}

}  // namespace

std::vector<SyntheticLanguage> DefaultSyntheticLanguages() {
  return {
      {"en", Codepoints(U'a', 16), false},
      {"ru", Codepoints(U'а', 16), false},
      {"zh", Codepoints(U'一', 16), true},
  };
}

std::vector<SyntheticUtterance> GenerateSynthetic(const SyntheticOptions& o) {
  if (o.languages.empty() || o.utterances_per_language < 0 || o.lexicon_size < 1 ||
      o.min_word_length < 1 || o.max_word_length < o.min_word_length || o.min_words < 1 ||
      o.max_words < o.min_words || o.frames_per_grapheme < 1 || o.noise < 0) {
    throw UsageError("synthetic corpus: invalid options");
  }
  Rng structure(o.structure_seed);
  const std::vector<float> silence(model::kAcousticDim, 0.0f);
  struct World {
    std::vector<std::vector<float>> prototypes;
    std::vector<std::vector<int>> lexicon;
  };
  std::vector<World> worlds;
  for (const auto& lang : o.languages) {
    if (lang.graphemes.empty()) throw UsageError(fmt::format("synthetic language '{}' has no graphemes", lang.code));
    World w;
    for (std::size_t g = 0; g < lang.graphemes.size(); ++g) w.prototypes.push_back(Prototype(structure));
    for (int i = 0; i < o.lexicon_size; ++i) {
      const auto len = UniformInclusive(structure, o.min_word_length, o.max_word_length);
      std::vector<int> word;
      for (int k = 0; k < len; ++k) {
        word.push_back(static_cast<int>(UniformIndex(structure, lang.graphemes.size())));
      }
      w.lexicon.push_back(std::move(word));
    }
    worlds.push_back(std::move(w));
  }

  Rng sample(o.sample_seed);
  std::vector<SyntheticUtterance> out;
  for (std::size_t l = 0; l < o.languages.size(); ++l) {
    const auto& lang = o.languages[l];
    const auto& world = worlds[l];
    for (int u = 0; u < o.utterances_per_language; ++u) {
      SyntheticUtterance utt;
      utt.id = fmt::format("{}-{}-{:05d}", o.id_prefix, lang.code, u);
      utt.language_code = lang.code;
      std::vector<const std::vector<float>*> frames;
      const auto words = UniformInclusive(sample, o.min_words, o.max_words);
      for (int w = 0; w < words; ++w) {
        if (w > 0) {
          if (!lang.space_free) utt.transcript += ' ';
          frames.push_back(&silence);
        }
        const auto& word = world.lexicon[UniformIndex(sample, world.lexicon.size())];
        for (int g : word) {
          utt.transcript += lang.graphemes[static_cast<std::size_t>(g)];
          for (int f = 0; f < o.frames_per_grapheme; ++f) frames.push_back(&world.prototypes[g]);
        }
      }
      utt.features = nn::Tensor<float>({frames.size(), std::size_t(model::kAcousticDim)});
      for (std::size_t t = 0; t < frames.size(); ++t) {
        auto row = utt.features.row(t);
        for (std::size_t d = 0; d < row.size(); ++d) {
          row[d] = (*frames[t])[d] + static_cast<float>(o.noise * StandardNormal(sample));
        }
      }
      out.push_back(std::move(utt));
    }
  }
  return out;
}

std::string WriteSyntheticCorpus(const std::vector<SyntheticUtterance>& utterances,
                                 const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(directory) / "features");
  const auto manifest = (fs::path(directory) / "manifest.jsonl").string();
  std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", manifest));
  for (const auto& u : utterances) {
    const auto relative = fs::path("features") / (u.id + ".feat");
    frontend::WriteFeatureFile((fs::path(directory) / relative).string(),
                               frontend::FeatureFrames{u.features, 30});
    UtteranceRecord r{u.id, u.language_code, "", relative.string(), u.transcript};
    out << ManifestLine(r) << '\n';
  }
  if (!out) throw IoError(fmt::format("failed writing '{}'", manifest));
  return manifest;
}

Dataset SyntheticDataset(const std::vector<SyntheticUtterance>& utterances,
                         const LanguageTable& languages, const vocab::GraphemeVocab& vocab) {
  std::vector<Example> examples;
  examples.reserve(utterances.size());
  for (const auto& u : utterances) {
    examples.push_back({u.id, languages.Id(u.language_code), u.features, vocab.Encode(u.transcript),
                        u.transcript});
  }
  return Dataset::FromExamples(std::move(examples), languages.size());
}

std::vector<vocab::TaggedText> Transcripts(const std::vector<SyntheticUtterance>& utterances) {
  std::vector<vocab::TaggedText> out;
  out.reserve(utterances.size());
  for (const auto& u : utterances) out.push_back({u.language_code, u.transcript});
  return out;
}

}  // namespace mlasr::train
