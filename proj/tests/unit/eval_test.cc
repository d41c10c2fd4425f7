#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "mlasr/common/error.h"
#include "mlasr/common/random.h"
#include "mlasr/eval/evaluate.h"
#include "mlasr/eval/wer.h"
#include "mlasr/common/tokens.h"
#include "mlasr/train/synthetic.h"
#include "oracles/wer_oracle.h"

using namespace mlasr;
using namespace mlasr::eval;

namespace {

std::vector<std::string> Words(std::string_view text) { return ScoringUnits(text, false); }

std::vector<std::string> AsWords(const std::vector<int>& seq) {
  std::vector<std::string> out;
  for (int v : seq) out.push_back(std::string(1, static_cast<char>('a' + v)));
  return out;
}

}  // namespace

TEST_CASE("alignment examples") {
  CHECK(AlignWer(Words("a b c"), Words("a b c")) == EditCounts{0, 0, 0, 3});
  CHECK(AlignWer(Words("a b c"), Words("a c")) == EditCounts{0, 1, 0, 3});
  CHECK(AlignWer(Words("a"), Words("b c")) == EditCounts{1, 0, 1, 1});
  CHECK(AlignWer(Words("a b"), {}) == EditCounts{0, 2, 0, 2});
  CHECK_THROWS_AS(AlignWer({}, Words("a")), UsageError);
}

TEST_CASE("the two exhaustive oracles agree on short pairs") {
  const auto seqs = oracle::AllSequences(3, 0, 4);
  for (const auto& r : seqs) {
    for (const auto& h : seqs) {
      CHECK(oracle::EnumeratePaths(r, h) ==
            oracle::EnumerateOutcomes(r.data(), int(r.size()), h.data(), int(h.size())));
    }
  }
}

TEST_CASE("alignment matches the outcome oracle on random pairs") {
  Rng rng(21);
  for (int trial = 0; trial < 20000; ++trial) {
    std::vector<int> r(1 + UniformIndex(rng, 6)), h(UniformIndex(rng, 7));
    for (int& v : r) v = int(UniformIndex(rng, 3));
    for (int& v : h) v = int(UniformIndex(rng, 3));
    const auto got = AlignWer(AsWords(r), AsWords(h));
    const auto want = oracle::EnumerateOutcomes(r.data(), int(r.size()), h.data(), int(h.size()));
    REQUIRE(got.substitutions == want.s);
    REQUIRE(got.deletions == want.d);
    REQUIRE(got.insertions == want.i);
    CHECK(got.substitutions + got.deletions <= got.reference_words);
    CHECK(got.insertions <= static_cast<long long>(h.size()));
  }
}

TEST_CASE("scoring units") {
  CHECK(Words("  hello   world \t") == std::vector<std::string>{"hello", "world"});
  CHECK(ScoringUnits("\xE4\xBD\xA0\xE5\xA5\xBD \xE5\x90\x97", true) ==
        std::vector<std::string>{"\xE4\xBD\xA0", "\xE5\xA5\xBD", "\xE5\x90\x97"});
  CHECK(IsSpaceFree("zh-TW", DefaultSpaceFreeLanguages()));
  CHECK(IsSpaceFree("ZH", DefaultSpaceFreeLanguages()));
  CHECK_FALSE(IsSpaceFree("ms-MY", DefaultSpaceFreeLanguages()));
  // Surrounding whitespace never changes the score.
  CHECK(AlignWer(Words("a b"), Words("  a c  ")) == AlignWer(Words("a b"), Words("a c")));
}

TEST_CASE("report averages and serialization") {
  WerReport report;
  report.Add("xx", {1, 0, 0, 10});
  report.Add("yy", {0, 1, 1, 10});
  CHECK(report.average_wer() == doctest::Approx(0.15));
  CHECK(report.weighted_wer() == doctest::Approx(0.15));
  report.Add("yy", {0, 0, 0, 10});
  CHECK(report.languages().at("yy").utterances == 2);
  CHECK(report.average_wer() == doctest::Approx((0.1 + 0.1) / 2));
  CHECK(report.weighted_wer() == doctest::Approx(3.0 / 30));

  // Deletion-only hypothesis gives 100%.
  WerReport empty_hyp;
  empty_hyp.Add("xx", AlignWer(Words("a b c"), {}));
  CHECK(empty_hyp.average_wer() == 1.0);

  std::vector<nlohmann::json> lines;
  std::string text = report.ToJsonLines();
  for (std::size_t pos = 0; pos < text.size();) {
    const auto nl = text.find('\n', pos);
    lines.push_back(nlohmann::json::parse(text.substr(pos, nl - pos)));
    pos = nl + 1;
  }
  REQUIRE(lines.size() == 3u);
  CHECK(lines[0]["language"] == "xx");
  CHECK(lines[2]["type"] == "summary");
  CHECK(lines[2]["average_wer"].get<double>() == doctest::Approx(0.1));
  CHECK(report.RenderTable().find("average") != std::string::npos);

  WerReport merged;
  merged += report;
  merged += empty_hyp;
  CHECK(merged.languages().at("xx").counts.reference_words == 13);
  CHECK_THROWS_AS(WerReport{}.average_wer(), UsageError);
}

TEST_CASE("evaluating a model that always stops at once") {
  train::SyntheticOptions o;
  o.utterances_per_language = 3;
  const auto utts = train::GenerateSynthetic(o);
  const auto vocab = vocab::GraphemeVocab::Build(train::Transcripts(utts), 1);
  const train::LanguageTable languages({"en", "ru", "zh"});
  const auto data = train::SyntheticDataset(utts, languages, vocab);

  model::ModelConfig c;
  c.encoder.num_layers = 5;
  c.encoder.model_dim = 8;
  c.encoder.attention_heads = 2;
  c.encoder.conv_kernel = 3;
  c.encoder.num_languages = 3;
  c.decoder.kind = model::DecoderKind::kTransformer;
  c.decoder.num_layers = 1;
  c.decoder.model_dim = 8;
  c.decoder.hidden_dim = 16;
  c.decoder.attention_heads = 2;
  c.vocab_size = vocab.size();
  nn::ParameterSet<float> ps;
  Rng rng(2);
  const model::AsrModel<float> m(c, ps, rng);
  ps.value(*ps.Find("decoder/0/output/b"))[kEndId] = 100.0f;

  std::vector<UtteranceScore> rows;
  EvaluateOptions options;
  options.threads = 2;
  const auto report = Evaluate(m, ps, vocab, languages, data, options, &rows);
  REQUIRE(rows.size() == data.size());
  for (const auto& r : rows) {
    CHECK(r.hypothesis.empty());
    CHECK(r.counts.deletions == r.counts.reference_words);
  }
  CHECK(report.average_wer() == 1.0);
  CHECK(report.languages().size() == 3);

  std::vector<train::UtteranceRecord> records = {{"x", "fr", "", "missing.feat", "a"}};
  CHECK_THROWS_AS(Evaluate(m, ps, vocab, languages, frontend::FeatureNormalizer{},
                           std::vector<train::UtteranceRecord>{}),
                  UsageError);
  CHECK_THROWS(Evaluate(m, ps, vocab, languages, frontend::FeatureNormalizer{}, records));
}
