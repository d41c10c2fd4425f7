#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "doctest.h"
#include "mlasr/common/error.h"
#include "mlasr/common/hash.h"
#include "mlasr/common/tokens.h"
#include "mlasr/model/model.h"
#include "mlasr/nn/grad_check.h"
#include "unit/test_util.h"

using namespace mlasr;
using namespace mlasr::model;
using mlasr::testing::Randomize;
using mlasr::testing::RandomTensor;
using mlasr::testing::ZeroMatching;
using nn::GradientCheck;
using nn::Shape;

namespace {

ModelConfig TinyConfig(Conditioning conditioning, int languages = 3) {
  ModelConfig c;
  c.encoder.num_layers = 5;
  c.encoder.model_dim = 8;
  c.encoder.attention_heads = 2;
  c.encoder.conv_kernel = 3;
  c.encoder.conditioning = conditioning;
  c.encoder.num_languages = languages;
  c.decoder.kind = DecoderKind::kTransformer;
  c.decoder.num_layers = 1;
  c.decoder.model_dim = 8;
  c.decoder.hidden_dim = 16;
  c.decoder.attention_heads = 2;
  c.vocab_size = 9;
  return c;
}

template <typename T>
Tensor<T> TinyLogits(const AsrModel<T>& m, const nn::ParameterSet<T>& ps,
                     const Tensor<T>& features, int language) {
  Graph<T> g;
  const int inputs[] = {kBeginId, 5, 6, 7};
  return g.value(m.Logits(g, ps, m.Encode(g, ps, features, language), inputs, language));
}

bool AllZero(const Tensor<double>& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return v == 0.0; });
}

}  // namespace

TEST_CASE("time stacking shapes and left padding") {
  Rng rng(1);
  for (const auto& [steps, out_steps] : {std::pair{4, 2}, {5, 3}, {1, 1}}) {
    Graph<double> g;
    const Tensor<double> x = RandomTensor<double>({std::size_t(steps), 8}, rng);
    const Tensor<double>& y = g.value(TimeStack(g, g.Input("x", x)));
    REQUIRE(y.shape() == Shape{std::size_t(out_steps), 16});
    if (steps % 2 == 1) {
      for (std::size_t c = 0; c < 8; ++c) {
        CHECK(y(0, c) == 0.0);
        CHECK(y(0, 8 + c) == x(0, c));
      }
    } else {
      CHECK(y(1, 0) == x(2, 0));
      CHECK(y(1, 15) == x(3, 7));
    }
  }
}

TEST_CASE("conformer layer preserves shape and reduces to its final norm at zero outputs") {
  Rng rng(2);
  nn::ParameterSet<double> ps;
  const ConformerShape shape{.dim = 16, .heads = 2, .kernel = 3, .ffn_hidden = 64};
  ConformerLayer<double> layer(ps, rng, "layer", shape);
  Randomize(ps, rng, 0.3);
  for (const char* fragment : {"ffn_in/down", "ffn_out/down", "attention/output", "pointwise_out"}) {
    CHECK(ZeroMatching(ps, fragment) == 2);
  }
  // Keep the final norm at its identity affine so the target is plain LN.
  ps.value(*ps.Find("layer/final_norm/gamma")).Fill(1.0);
  ps.value(*ps.Find("layer/final_norm/beta")).Fill(0.0);
  for (std::size_t steps : {1u, 6u, 11u}) {
    Graph<double> g;
    const Var x = g.Input("h", RandomTensor<double>({steps, 16}, rng));
    const Tensor<double>& y = g.value(layer(g, ps, x));
    const Var ones = g.Input("g", Tensor<double>::Full({16}, 1.0));
    const Var zeros = g.Input("b", Tensor<double>({16}));
    const Tensor<double>& expected = g.value(nn::LayerNorm(g, x, ones, zeros));
    REQUIRE(y.shape() == expected.shape());
    double worst = 0;
    for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(y[i] - expected[i]));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("conformer layer gradient check at width 16") {
  for (bool relative : {true, false}) {
    Rng rng(3);
    nn::ParameterSet<double> ps;
    ConformerLayer<double> layer(ps, rng, "layer",
                                 {.dim = 16, .heads = 2, .kernel = 3, .ffn_hidden = 64,
                                  .groups = 2, .relative = relative});
    Randomize(ps, rng, 0.3);
    const Tensor<double> x = RandomTensor<double>({5, 16}, rng);
    const auto report = GradientCheck(
        [&](Graph<double>& g, const nn::ParameterSet<double>& p) {
          return layer(g, p, g.Input("h", x));
        },
        ps, 1e-5, 1e-4);
    INFO("relative=" << relative << " worst " << report.worst() << " at "
                     << report.worst_parameter());
    CHECK(report.passed());
  }
}

TEST_CASE("adapter is the identity at init and passes a gradient check") {
  Rng rng(4);
  nn::ParameterSet<double> ps;
  Adapter<double> adapter(ps, rng, "adapter", 16, 4);
  const Tensor<double> x = RandomTensor<double>({3, 16}, rng);
  {
    Graph<double> g;
    CHECK(g.value(adapter(g, ps, g.Input("h", x))) == x);
  }
  Randomize(ps, rng, 0.5);
  const auto report = GradientCheck(
      [&](Graph<double>& g, const nn::ParameterSet<double>& p) {
        return adapter(g, p, g.Input("h", x));
      },
      ps, 1e-5, 1e-4);
  INFO("worst " << report.worst() << " at " << report.worst_parameter());
  CHECK(report.passed());
}

TEST_CASE("encoder output length is ceil(T/2)") {
  Rng rng(5);
  nn::ParameterSet<float> ps;
  const ModelConfig config = TinyConfig(Conditioning::kNone);
  Encoder<float> encoder(config.encoder, ps, rng);
  for (std::size_t steps : {1u, 2u, 5u, 20u}) {
    Graph<float> g;
    const auto& out = g.value(encoder(g, ps, RandomTensor<float>({steps, 240}, rng), 0));
    CHECK(out.rows() == (steps + 1) / 2);
    CHECK(out.cols() == 8u);
  }
}

TEST_CASE("encoder block layout and conditioning widths") {
  Rng rng(6);
  nn::ParameterSet<float> ps;
  ModelConfig config = TinyConfig(Conditioning::kBiasConcat, 16);
  config.encoder.num_layers = 17;
  Encoder<float> encoder(config.encoder, ps, rng);
  CHECK(ps.value(*ps.Find("encoder/input_projection/w")).shape() == Shape{256, 8});
  int per_block[4] = {0, 0, 0, 0};
  for (int layer = 0; layer < 17; ++layer) {
    for (int block = 1; block <= 3; ++block) {
      const auto name = "encoder/block" + std::to_string(block) + "/layer" +
                        std::to_string(layer) + "/final_norm/gamma";
      if (ps.Find(name)) ++per_block[block];
    }
  }
  CHECK(per_block[1] == 4);
  CHECK(per_block[2] == 1);
  CHECK(per_block[3] == 12);
  CHECK(ps.value(*ps.Find("encoder/block2/layer4/final_norm/gamma")).size() == 16u);

  Graph<float> g;
  CHECK_THROWS_AS(encoder(g, ps, RandomTensor<float>({4, 240}, rng), 16), UsageError);
  config.encoder.num_layers = 4;
  CHECK_THROWS_AS(Encoder<float>(config.encoder, ps, rng), ConfigError);
}

TEST_CASE("per-language adapters are isolated from other languages") {
  Rng rng(7);
  nn::ParameterSet<double> ps;
  const ModelConfig config = TinyConfig(Conditioning::kPerLanguageAdapter);
  AsrModel<double> m(config, ps, rng);
  Randomize(ps, rng, 0.3);
  const Tensor<double> features = RandomTensor<double>({6, 240}, rng);
  const Tensor<double> before = TinyLogits(m, ps, features, 0);
  Randomize(ps, rng, 1.0, "/lang1/");
  Randomize(ps, rng, 1.0, "/lang2/");
  CHECK(TinyLogits(m, ps, features, 0) == before);
  Randomize(ps, rng, 1.0, "/lang0/");
  CHECK_FALSE(TinyLogits(m, ps, features, 0) == before);
}

TEST_CASE("shared adapter gives identical outputs across languages") {
  Rng rng(8);
  nn::ParameterSet<double> ps;
  AsrModel<double> m(TinyConfig(Conditioning::kSharedAdapter), ps, rng);
  Randomize(ps, rng, 0.3);
  const Tensor<double> features = RandomTensor<double>({6, 240}, rng);
  CHECK(TinyLogits(m, ps, features, 0) == TinyLogits(m, ps, features, 2));
}

TEST_CASE("bias concat without language weights is language independent") {
  Rng rng(9);
  nn::ParameterSet<double> ps;
  AsrModel<double> m(TinyConfig(Conditioning::kBiasConcat), ps, rng);
  Randomize(ps, rng, 0.3);
  const Tensor<double> features = RandomTensor<double>({6, 240}, rng);
  CHECK_FALSE(TinyLogits(m, ps, features, 0) == TinyLogits(m, ps, features, 1));
  auto& w = ps.value(*ps.Find("encoder/input_projection/w"));
  for (std::size_t r = kAcousticDim; r < w.rows(); ++r) {
    for (double& v : w.row(r)) v = 0.0;
  }
  CHECK(TinyLogits(m, ps, features, 0) == TinyLogits(m, ps, features, 1));
}

TEST_CASE("las step attention is normalized per head") {
  Rng rng(10);
  nn::ParameterSet<double> ps;
  DecoderConfig config{.kind = DecoderKind::kLas, .num_layers = 2, .model_dim = 16,
                       .hidden_dim = 16, .attention_heads = 4};
  LasDecoder<double> dec(config, 12, 8, ps, rng, "las");
  Randomize(ps, rng, 0.5);
  for (std::size_t frames : {1u, 7u}) {
    Graph<double> g;
    const auto memory = dec.Prepare(g, ps, g.Input("enc", RandomTensor<double>({frames, 12}, rng)));
    const auto out = dec.Step(g, ps, memory, 3, dec.InitialState(g));
    CHECK(g.value(out.logits).shape() == Shape{1, 8});
    REQUIRE(out.attention.size() == 4u);
    for (Var w : out.attention) {
      const auto& weights = g.value(w);
      REQUIRE(weights.size() == frames);
      double total = 0;
      for (double v : weights.values()) total += v;
      CHECK(std::abs(total - 1.0) < 1e-6);
      if (frames == 1) CHECK(weights[0] == 1.0);
    }
  }
}

TEST_CASE("las step gradient check at width 16") {
  Rng rng(11);
  nn::ParameterSet<double> ps;
  DecoderConfig config{.kind = DecoderKind::kLas, .num_layers = 2, .model_dim = 16,
                       .hidden_dim = 16, .attention_heads = 4};
  LasDecoder<double> dec(config, 16, 8, ps, rng, "las");
  Randomize(ps, rng, 0.3);
  const Tensor<double> enc = RandomTensor<double>({4, 16}, rng);
  std::vector<Tensor<double>> state_values;
  for (std::size_t i = 0; i < 5; ++i) state_values.push_back(RandomTensor<double>({1, 16}, rng, 0.5));
  const auto report = GradientCheck(
      [&](Graph<double>& g, const nn::ParameterSet<double>& p) {
        const auto memory = dec.Prepare(g, p, g.Input("enc", enc));
        LasDecoder<double>::State state;
        for (std::size_t l = 0; l < 2; ++l) {
          state.layers.push_back({g.Input("h", state_values[2 * l]), g.Input("c", state_values[2 * l + 1])});
        }
        state.context = g.Input("context", state_values[4]);
        return dec.Step(g, p, memory, 5, state).logits;
      },
      ps, 1e-5, 1e-4);
  INFO("worst " << report.worst() << " at " << report.worst_parameter());
  CHECK(report.passed());
}

TEST_CASE("transformer decoder is causal and passes a gradient check") {
  Rng rng(12);
  nn::ParameterSet<double> ps;
  DecoderConfig config{.kind = DecoderKind::kTransformer, .num_layers = 2, .model_dim = 16,
                       .hidden_dim = 32, .attention_heads = 2};
  TransformerDecoder<double> dec(config, 16, 8, ps, rng, "tr");
  Randomize(ps, rng, 0.3);
  const Tensor<double> enc = RandomTensor<double>({4, 16}, rng);
  const std::vector<int> a = {kBeginId, 4, 5, 6, 7};
  for (std::size_t t = 1; t < a.size(); ++t) {
    std::vector<int> b = a;
    for (std::size_t k = t; k < b.size(); ++k) b[k] = (b[k] + 3) % 8;
    Graph<double> g;
    const auto& la = g.value(dec.Logits(g, ps, g.Input("enc", enc), a));
    const auto& lb = g.value(dec.Logits(g, ps, g.Input("enc", enc), b));
    for (std::size_t r = 0; r < t; ++r) {
      CHECK(std::equal(la.row(r).begin(), la.row(r).end(), lb.row(r).begin()));
    }
    CHECK_FALSE(std::equal(la.row(t).begin(), la.row(t).end(), lb.row(t).begin()));
  }
  Graph<double> g;
  CHECK_THROWS_AS(dec.Logits(g, ps, g.Input("enc", enc), std::span<const int>{}), ShapeError);

  const auto report = GradientCheck(
      [&](Graph<double>& g, const nn::ParameterSet<double>& p) {
        return dec.Logits(g, p, g.Input("enc", enc), a);
      },
      ps, 1e-5, 1e-4);
  INFO("worst " << report.worst() << " at " << report.worst_parameter());
  CHECK(report.passed());

  DecoderConfig big{.kind = DecoderKind::kTransformer, .num_layers = 12, .model_dim = 768,
                    .hidden_dim = 3072, .attention_heads = 8};
  CHECK_NOTHROW(big.Validate(16));
}

TEST_CASE("transformer decoder layer gradient check at width 16") {
  Rng rng(13);
  nn::ParameterSet<double> ps;
  TransformerDecoderLayer<double> layer(ps, rng, "layer", 16, 12, 32, 2);
  Randomize(ps, rng, 0.3);
  const Tensor<double> x = RandomTensor<double>({4, 16}, rng);
  const Tensor<double> enc = RandomTensor<double>({3, 12}, rng);
  const auto report = GradientCheck(
      [&](Graph<double>& g, const nn::ParameterSet<double>& p) {
        return layer(g, p, g.Input("x", x), g.Input("enc", enc));
      },
      ps, 1e-5, 1e-4);
  INFO("worst " << report.worst() << " at " << report.worst_parameter());
  CHECK(report.passed());
}

TEST_CASE("decoder routing") {
  DecoderConfig single;
  for (int lang = 0; lang < 16; ++lang) CHECK(Route(single, lang) == 0);
  DecoderConfig families{.routing = Routing::kPerFamily,
                         .families = {0, 0, 1, 2, 2, 3, 4, 4, 4}};
  CHECK(families.num_instances() == 5);
  for (int lang = 0; lang < 9; ++lang) {
    const int id = Route(families, lang);
    CHECK(id >= 0);
    CHECK(id < 5);
  }
  CHECK(Route(families, 0) == Route(families, 1));
  CHECK_THROWS_AS(Route(families, 9), UsageError);
  CHECK_THROWS_AS(families.Validate(10), ConfigError);
}

TEST_CASE("single-family batches leave other decoders without gradient") {
  Rng rng(14);
  nn::ParameterSet<double> ps;
  ModelConfig config = TinyConfig(Conditioning::kNone, 6);
  config.decoder.routing = Routing::kPerFamily;
  config.decoder.families = {0, 1, 2, 3, 4, 2};
  AsrModel<double> m(config, ps, rng);
  REQUIRE(m.num_decoders() == 5);
  Randomize(ps, rng, 0.3);
  nn::Gradients<double> grads(ps);
  for (int lang : {2, 5}) {
    Graph<double> g;
    const int tokens[] = {kBeginId, 5, 6, kEndId};
    const Var loss = m.Loss(g, ps, RandomTensor<double>({6, 240}, rng), lang, tokens);
    g.Backward(loss);
    g.AccumulateParamGrads(ps, grads);
  }
  for (nn::ParamId id = 0; id < ps.size(); ++id) {
    const std::string& name = ps.name(id);
    if (!name.starts_with("decoder/")) continue;
    INFO(name);
    CHECK(AllZero(grads[id]) == !name.starts_with("decoder/2/"));
  }
}

namespace {

// Pseudo-random but fixed log-probabilities as a function of the prefix.
class HashedScorer final : public StepScorer {
 public:
  HashedScorer(int vocab, std::uint64_t seed) : vocab_(vocab), seed_(seed) {}
  std::vector<double> NextLogProbs(std::span<const int> prefix) override {
    Fnv1a64 h;
    h.Update(std::string_view(reinterpret_cast<const char*>(&seed_), sizeof(seed_)));
    h.Update(std::string_view(reinterpret_cast<const char*>(prefix.data()),
                              prefix.size() * sizeof(int)));
    Rng rng(h.digest());
    std::vector<double> logits(vocab_);
    for (double& v : logits) v = 2.0 * StandardNormal(rng);
    return LogSoftmax(logits);
  }

 private:
  int vocab_;
  std::uint64_t seed_;
};

// Every sequence the search may return: those ending in end within max_len,
// and those of exactly max_len tokens without end.
Hypothesis Exhaustive(StepScorer& scorer, int vocab, int max_len) {
  Hypothesis best;
  best.log_prob = -std::numeric_limits<double>::infinity();
  std::function<void(Hypothesis)> visit = [&](Hypothesis h) {
    const int generated = static_cast<int>(h.tokens.size()) - 1;
    if (h.finished || generated == max_len) {
      if (h.log_prob > best.log_prob) best = h;
      return;
    }
    const auto lp = scorer.NextLogProbs(h.tokens);
    for (int v = 0; v < vocab; ++v) {
      Hypothesis next = h;
      next.tokens.push_back(v);
      next.log_prob += lp[v];
      next.finished = v == kEndId;
      visit(next);
    }
  };
  visit(Hypothesis{{kBeginId}, 0.0, false});
  return best;
}

}  // namespace

TEST_CASE("wide beam search matches exhaustive enumeration") {
  for (int vocab : {2, 3}) {
    for (int max_len = 1; max_len <= 6; ++max_len) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        HashedScorer scorer(vocab, seed);
        const Hypothesis oracle = Exhaustive(scorer, vocab, max_len);
        const int beam = static_cast<int>(std::pow(vocab, max_len));
        const Hypothesis got = BeamSearch(scorer, {.beam_size = beam, .max_len = max_len});
        INFO("vocab " << vocab << " max_len " << max_len << " seed " << seed);
        CHECK(got.tokens == oracle.tokens);
        CHECK(std::abs(got.log_prob - oracle.log_prob) < 1e-12);
        CHECK(got.finished == (got.tokens.back() == kEndId));
      }
    }
  }
}

TEST_CASE("beam size one is greedy and max_len caps generation") {
  HashedScorer scorer(5, 42);
  Hypothesis greedy{{kBeginId}, 0.0, false};
  for (int step = 0; step < 8 && !greedy.finished; ++step) {
    const auto lp = scorer.NextLogProbs(greedy.tokens);
    const int best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    greedy.tokens.push_back(best);
    greedy.log_prob += lp[best];
    greedy.finished = best == kEndId;
  }
  const Hypothesis got = BeamSearch(scorer, {.beam_size = 1, .max_len = 8});
  CHECK(got.tokens == greedy.tokens);
  CHECK(BeamSearch(scorer, {.beam_size = 3, .max_len = 1}).tokens.size() == 2u);
}

TEST_CASE("model decode produces a well-formed hypothesis for both decoder kinds") {
  for (DecoderKind kind : {DecoderKind::kLas, DecoderKind::kTransformer}) {
    Rng rng(15);
    nn::ParameterSet<float> ps;
    ModelConfig config = TinyConfig(Conditioning::kBiasConcat);
    config.decoder.kind = kind;
    AsrModel<float> m(config, ps, rng);
    const Tensor<float> features = RandomTensor<float>({6, 240}, rng);
    const Hypothesis h = m.Decode(ps, features, 1, {.beam_size = 3, .max_len = 5});
    CHECK(h.tokens.front() == kBeginId);
    CHECK(h.tokens.size() <= 6u);
    CHECK(h.finished == (h.tokens.back() == kEndId));
    // Teacher-forced logits agree with the incremental LAS scorer.
    Graph<float> g;
    const Var enc = m.Encode(g, ps, features, 1);
    auto scorer = m.decoder(0).Scorer(ps, g.value(enc));
    const int inputs[] = {kBeginId, 4, 6};
    const auto& logits = g.value(m.Logits(g, ps, enc, inputs, 1));
    const auto lp = scorer->NextLogProbs(inputs);
    const auto row = logits.row(2);
    const auto expected = LogSoftmax(std::vector<double>(row.begin(), row.end()));
    for (std::size_t v = 0; v < lp.size(); ++v) CHECK(std::abs(lp[v] - expected[v]) < 1e-5);
  }
}

TEST_CASE("model config round-trips through key-value text") {
  ModelConfig c = TinyConfig(Conditioning::kPerLanguageAdapter, 4);
  c.decoder.routing = Routing::kPerFamily;
  c.decoder.families = {0, 1, 1, 0};
  c.encoder.ffn_expansion = {3, 2};
  const ModelConfig back = ModelConfig::FromKeyValues(KeyValues::Parse(c.Serialize()));
  CHECK(back == c);
  CHECK_THROWS_AS(ModelConfig::FromKeyValues(KeyValues::Parse("encoder.layers = 3\n")),
                  ConfigError);
}
