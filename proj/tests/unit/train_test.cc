#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "mlasr/common/error.h"
#include "mlasr/train/corpus_stats.h"
#include "mlasr/train/synthetic.h"
#include "mlasr/train/trainer.h"
#include "unit/test_util.h"

using namespace mlasr;
using namespace mlasr::train;
using mlasr::testing::RandomTensor;

namespace {

model::ModelConfig TinyModel(model::Conditioning conditioning, int vocab_size, int languages = 3) {
  model::ModelConfig c;
  c.encoder.num_layers = 5;
  c.encoder.model_dim = 8;
  c.encoder.attention_heads = 2;
  c.encoder.conv_kernel = 3;
  c.encoder.conditioning = conditioning;
  c.encoder.num_languages = languages;
  c.decoder.kind = model::DecoderKind::kTransformer;
  c.decoder.num_layers = 1;
  c.decoder.model_dim = 8;
  c.decoder.hidden_dim = 16;
  c.decoder.attention_heads = 2;
  c.vocab_size = vocab_size;
  return c;
}

struct TinyWorld {
  std::vector<SyntheticUtterance> utterances;
  vocab::GraphemeVocab vocab;
  LanguageTable languages;
  Dataset data;
};

TinyWorld MakeWorld(int per_language = 12, std::uint64_t seed = 3) {
  SyntheticOptions o;
  o.utterances_per_language = per_language;
  o.max_words = 2;
  o.sample_seed = seed;
  TinyWorld w;
  w.utterances = GenerateSynthetic(o);
  w.vocab = vocab::GraphemeVocab::Build(Transcripts(w.utterances), 1);
  w.languages = LanguageTable({"en", "ru", "zh"});
  w.data = SyntheticDataset(w.utterances, w.languages, w.vocab);
  return w;
}

TrainConfig QuietConfig(int batch = 4) {
  TrainConfig c;
  c.batch_size = batch;
  c.schedule.peak_lr = 1e-2;
  c.schedule.warmup_steps = 10;
  c.augment = frontend::SpecAugmentPolicy::Identity();
  return c;
}

template <typename T>
nn::Tensor<T> LogitsFor(const model::AsrModel<T>& m, const nn::ParameterSet<T>& ps,
                        const Example& e, int language) {
  nn::Graph<T> g;
  const auto enc = m.Encode(g, ps, nn::Cast<T>(e.features), language);
  const std::vector<int> inputs(e.tokens.begin(), e.tokens.end() - 1);
  return g.value(m.Logits(g, ps, enc, inputs, language));
}

std::vector<double> Frequencies(const std::vector<std::size_t>& draws, std::size_t languages) {
  std::vector<double> f(languages, 0.0);
  for (auto d : draws) f[d] += 1.0;
  for (auto& v : f) v /= static_cast<double>(draws.size());
  return f;
}

// Pools where index == language, so drawn indices are drawn languages.
std::vector<std::vector<std::size_t>> IdentityPools(std::size_t n) {
  std::vector<std::vector<std::size_t>> pools(n);
  for (std::size_t i = 0; i < n; ++i) pools[i] = {i};
  return pools;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  const ScheduleConfig s;
  CHECK(LrAt(10000, s) == 3e-4);
  CHECK(LrAt(2500, s) == doctest::Approx(7.5e-5).epsilon(1e-12));
  CHECK(LrAt(40000, s) == doctest::Approx(1.5e-4).epsilon(1e-12));
  CHECK(std::abs(LrAt(10001, s) - LrAt(10000, s)) < 1e-7);
  CHECK_THROWS_AS(LrAt(0, s), UsageError);
  for (std::int64_t step = 1; step < 30000; step += 37) {
    if (step + 1 <= s.warmup_steps) CHECK(LrAt(step + 1, s) > LrAt(step, s));
    if (step >= s.warmup_steps) CHECK(LrAt(step + 1, s) < LrAt(step, s));
  }
  CHECK_THROWS_AS((ScheduleConfig{0.0, 10}.Validate()), ConfigError);
  CHECK_THROWS_AS((ScheduleConfig{1e-3, 0}.Validate()), ConfigError);
}

TEST_CASE("adam first step is minus lr times the gradient sign") {
  const auto cfg = OptimizerConfig::Adam();
  const Optimizer<double> opt(cfg, nn::ParameterSet<double>{});
  Rng rng(5);
  const auto g = RandomTensor<double>({3, 4}, rng);
  auto slots = opt.MakeSlots(g);
  const double lr = 1e-3;
  const auto delta = opt.Delta(slots, g, lr);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(std::abs(delta[i] + lr * (g[i] > 0 ? 1 : -1)) < 1e-6);
  }
  // Zero gradients: zero delta from fresh slots, decay only afterwards.
  auto fresh = opt.MakeSlots(g);
  const nn::Tensor<double> zero(g.shape());
  const auto d0 = opt.Delta(fresh, zero, lr);
  CHECK(std::all_of(d0.values().begin(), d0.values().end(), [](double v) { return v == 0; }));
  const auto before = slots;
  opt.Delta(slots, zero, lr);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(slots.first[i] == doctest::Approx(cfg.beta1 * before.first[i]));
    CHECK(slots.second[i] == doctest::Approx(cfg.beta2 * before.second[i]));
  }
}

TEST_CASE("adafactor factors matrix second moments") {
  const auto cfg = OptimizerConfig::Adafactor();
  CHECK(cfg.beta1 == 0.9);
  CHECK(cfg.beta2 == 0.99);
  Optimizer<double> opt(cfg, nn::ParameterSet<double>{});
  const auto matrix = opt.MakeSlots(nn::Tensor<double>({7, 5}));
  CHECK(matrix.SecondMomentValues() == 7 + 5);
  CHECK(matrix.first.size() == 35);
  CHECK(opt.MakeSlots(nn::Tensor<double>({6})).SecondMomentValues() == 6);
  CHECK(Optimizer<double>(OptimizerConfig::Adam(), {}).MakeSlots(nn::Tensor<double>({7, 5}))
            .SecondMomentValues() == 35);

  // With a rank-one squared gradient the factored estimate is exact, so
  // with beta1 = 0 the first step is -lr * sign(g).
  auto exact = cfg;
  exact.beta1 = 0;
  Optimizer<double> plain(exact, {});
  Rng rng(11);
  nn::Tensor<double> g({4, 6});
  const auto a = RandomTensor<double>({4}, rng);
  const auto b = RandomTensor<double>({6}, rng);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 6; ++c) g(r, c) = a[r] * b[c];
  }
  auto slots = plain.MakeSlots(g);
  const auto delta = plain.Delta(slots, g, 0.01);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(delta[i] == doctest::Approx(-0.01 * (g[i] > 0 ? 1 : -1)).epsilon(1e-9));
  }

  // Clipping bounds the RMS of the pre-momentum update by the threshold.
  for (int trial = 0; trial < 20; ++trial) {
    Optimizer<double> o(cfg, {});
    auto s = o.MakeSlots(nn::Tensor<double>({5, 3}));
    for (int k = 0; k < 3; ++k) {
      const auto before = s.first;
      const auto grad = RandomTensor<double>({5, 3}, rng, std::pow(10.0, trial % 5 - 2));
      o.Delta(s, grad, 1.0);
      double sq = 0;
      for (std::size_t i = 0; i < grad.size(); ++i) {
        const double u = (s.first[i] - cfg.beta1 * before[i]) / (1 - cfg.beta1);
        sq += u * u;
      }
      CHECK(std::sqrt(sq / 15) <= cfg.clip_threshold + 1e-9);
    }
  }
}

TEST_CASE("sampler frequencies") {
  const auto pools = IdentityPools(3);
  MixingSchedule s{{0.5, 0.3, 0.2}, 1};
  Rng rng(21);
  const auto draws = SampleBatch(pools, s, 100000, rng);
  const auto f = Frequencies(draws, 3);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(f[i] - s.weights[i]) <= 0.01);

  Rng again(21);
  CHECK(SampleBatch(pools, s, 100000, again) == draws);

  const MixingSchedule only{{0, 1, 0}, 1};
  const auto all = SampleBatch(pools, only, 500, rng);
  CHECK(std::all_of(all.begin(), all.end(), [](std::size_t i) { return i == 1; }));

  std::vector<double> counts;
  for (const auto& stat : FifteenLanguageStats()) counts.push_back(stat.utterances_millions);
  const auto natural = NaturalSchedule(counts);
  CHECK(natural.weights[0] == doctest::Approx(34.6 / kStatedTotalUtterancesMillions).epsilon(1e-3));

  auto empty = IdentityPools(3);
  empty[2].clear();
  CHECK_THROWS_AS(SampleBatch(empty, s, 4, rng), UsageError);
  CHECK_NOTHROW(SampleBatch(empty, MixingSchedule{{1, 1, 0}, 1}, 4, rng));
  CHECK_THROWS_AS((MixingSchedule{{0, 0, 0}, 1}.Validate()), UsageError);
  CHECK_THROWS_AS((MixingSchedule{{1, -0.1, 0}, 1}.Validate()), UsageError);
  CHECK_THROWS_AS((MixingSchedule{{1, NAN, 0}, 1}.Validate()), UsageError);
}

TEST_CASE("boosting one language keeps the rest equal") {
  const int languages = 15;
  const auto s = BoostLanguage(languages, 11, 0.4);
  for (int j = 0; j < languages; ++j) {
    CHECK(s.weights[j] == doctest::Approx(j == 11 ? 0.4 : 0.6 / 14));
  }
  CHECK(std::accumulate(s.weights.begin(), s.weights.end(), 0.0) == doctest::Approx(1.0));
  const auto pools = IdentityPools(languages);
  Rng rng(8);
  const auto f = Frequencies(SampleBatch(pools, s, 100000, rng), languages);
  for (int j = 0; j < languages; ++j) CHECK(std::abs(f[j] - s.weights[j]) <= 0.01);
  CHECK_THROWS_AS(BoostLanguage(3, 3, 0.5), UsageError);
  CHECK_THROWS_AS(BoostLanguage(3, 0, 1.5), UsageError);
}

TEST_CASE("applying mixing schedules") {
  auto world = MakeWorld(4);
  auto state = InitialState<double>(TinyModel(model::Conditioning::kBiasConcat, world.vocab.size()),
                                    QuietConfig(), world.languages, world.vocab.Hash(), {});
  state.step = 7;
  const auto first = ApplyMixing(state, MixingSchedule{{2, 1, 1}, 0}, "test");
  CHECK(first.changed);
  CHECK(first.effective_step == 8);
  CHECK(state.schedule.effective_step == 8);
  CHECK(state.schedule.weights == std::vector<double>{0.5, 0.25, 0.25});
  CHECK(state.history.size() == 1);

  const auto again = ApplyMixing(state, MixingSchedule{{0.5, 0.25, 0.25}, 0}, "test");
  CHECK_FALSE(again.changed);
  CHECK(state.history.size() == 1);
  CHECK(state.audit.size() == 2);
  CHECK(state.schedule.effective_step == 8);

  CHECK_THROWS_AS(ApplyMixing(state, MixingSchedule{{0, 0, 0}, 0}), UsageError);
  CHECK_THROWS_AS(ApplyMixing(state, MixingSchedule{{1, 1}, 0}), UsageError);
  CHECK(state.audit.size() == 2);
}

TEST_CASE("train config round-trips through key-value text") {
  TrainConfig c = QuietConfig(7);
  c.optimizer = OptimizerConfig::Adafactor();
  c.workers = 2;
  c.seed = 99;
  c.reset_slots_on_extend = false;
  const auto back = TrainConfig::FromKeyValues(KeyValues::Parse(c.ToKeyValues().Serialize()));
  CHECK(back == c);
  auto bad = c.ToKeyValues();
  bad.Set("train.batchsize", "3");
  CHECK_THROWS_AS(TrainConfig::FromKeyValues(bad), ConfigError);
  bad = c.ToKeyValues();
  bad.Set("train.batch_size", "0");
  CHECK_THROWS_AS(TrainConfig::FromKeyValues(bad), ConfigError);
}

TEST_CASE("uniform logits give a per-token loss of ln V") {
  auto world = MakeWorld(4);
  auto state = InitialState<double>(TinyModel(model::Conditioning::kNone, world.vocab.size(), 3),
                                    QuietConfig(6), world.languages, world.vocab.Hash(), {});
  testing::ZeroMatching(state.params, "decoder/0/output/");
  Trainer<double> trainer(std::move(state), world.data);
  const std::vector<std::size_t> batch = {0, 5, 9};
  CHECK(std::abs(trainer.Loss(batch) - std::log(world.vocab.size())) < 1e-3);
  const auto r = trainer.StepOn(batch);
  CHECK(std::abs(r.loss - std::log(world.vocab.size())) < 1e-3);
  CHECK(r.step == 1);
  CHECK(trainer.state().step == 1);
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  auto world = MakeWorld(4);
  for (auto kind : {OptimizerKind::kAdam, OptimizerKind::kAdafactor}) {
    auto config = QuietConfig();
    config.optimizer = kind == OptimizerKind::kAdam ? OptimizerConfig::Adam()
                                                    : OptimizerConfig::Adafactor();
    auto state = InitialState<double>(TinyModel(model::Conditioning::kBiasConcat, world.vocab.size()),
                                      config, world.languages, world.vocab.Hash(), {});
    const auto before = state.params;
    Trainer<double> trainer(std::move(state), world.data);
    // A zero-rate update driven by nonzero gradients.
    nn::Gradients<double> grads(trainer.state().params);
    auto params = trainer.state().params;
    auto opt = trainer.state().optimizer;
    for (nn::ParamId id = 0; id < grads.size(); ++id) {
      for (auto& v : grads[id].values()) v = 0.5;
    }
    opt.Update(params, grads, 0.0);
    CHECK(params == before);
  }
}

TEST_CASE("overfitting one batch lowers the loss every step") {
  auto world = MakeWorld(6);
  auto model = TinyModel(model::Conditioning::kBiasConcat, world.vocab.size());
  auto state = InitialState<double>(model, QuietConfig(), world.languages, world.vocab.Hash(), {});
  CHECK(state.params.NumScalars() < 20000);
  Trainer<double> trainer(std::move(state), world.data);
  const std::vector<std::size_t> batch = {0, 7, 13};
  double previous = std::numeric_limits<double>::infinity();
  int decreases = 0;
  for (int i = 0; i < 50; ++i) {
    const auto r = trainer.StepOn(batch);
    decreases += r.loss < previous;
    previous = r.loss;
  }
  CHECK(decreases == 50);
  CHECK(trainer.Loss(batch) < 0.5 * std::log(world.vocab.size()));
}

TEST_CASE("training is deterministic and worker sharding matches") {
  auto world = MakeWorld(8);
  auto model = TinyModel(model::Conditioning::kPerLanguageAdapter, world.vocab.size());
  auto run = [&](int workers) {
    auto config = QuietConfig(5);
    config.workers = workers;
    config.augment = frontend::SpecAugmentPolicy{1, 20, 1, 3, 0.0f};
    auto state = InitialState<double>(model, config, world.languages, world.vocab.Hash(), {});
    Trainer<double> trainer(std::move(state), world.data);
    std::vector<double> losses;
    for (int i = 0; i < 12; ++i) losses.push_back(trainer.Step().loss);
    return std::pair{losses, std::move(trainer).TakeState()};
  };
  const auto [a, sa] = run(1);
  const auto [b, sb] = run(1);
  CHECK(a == b);
  CHECK(sa.params == sb.params);
  const auto [c, sc] = run(3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(c[i] == doctest::Approx(a[i]).epsilon(1e-9));
}

TEST_CASE("non-finite loss names the batch") {
  auto world = MakeWorld(4);
  auto examples = world.data.examples();
  examples[2].features(0, 0) = std::numeric_limits<float>::quiet_NaN();
  const auto poisoned = Dataset::FromExamples(examples, 3);
  auto state = InitialState<double>(TinyModel(model::Conditioning::kNone, world.vocab.size()),
                                    QuietConfig(), world.languages, world.vocab.Hash(), {});
  Trainer<double> trainer(std::move(state), poisoned);
  const std::vector<std::size_t> batch = {1, 2};
  try {
    trainer.StepOn(batch);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find(examples[2].id) != std::string::npos);
  }
  CHECK(trainer.state().step == 0);
}

TEST_CASE("queued mixing applies at the next batch boundary") {
  auto world = MakeWorld(6);
  auto state = InitialState<float>(TinyModel(model::Conditioning::kBiasConcat, world.vocab.size()),
                                   QuietConfig(8), world.languages, world.vocab.Hash(), {});
  Trainer<float> trainer(std::move(state), world.data);
  trainer.Step();
  const auto ack = trainer.SubmitMixing(MixingSchedule{{0, 0, 1}, 0}, "test");
  CHECK(ack.effective_step == 2);
  const auto r = trainer.Step();
  for (auto index : r.batch) CHECK(world.data[index].language == 2);
  CHECK(trainer.state().audit.back().effective_step == ack.effective_step);
  CHECK(trainer.state().schedule.effective_step == 2);

  // Two quick submissions: both audited, the later one wins.
  trainer.SubmitMixing(MixingSchedule{{1, 0, 0}, 0}, "a");
  const auto last = trainer.SubmitMixing(MixingSchedule{{0, 1, 0}, 0}, "b");
  const auto r3 = trainer.Step();
  for (auto index : r3.batch) CHECK(world.data[index].language == 1);
  const auto& audit = trainer.state().audit;
  REQUIRE(audit.size() == 3);
  CHECK(audit[1].source == "a");
  CHECK(audit[2].source == "b");
  CHECK(audit[2].effective_step == last.effective_step);
  CHECK_THROWS_AS(trainer.SubmitMixing(MixingSchedule{{-1, 1, 1}, 0}), UsageError);
  CHECK(trainer.state().schedule.weights == std::vector<double>{0, 1, 0});
}

TEST_CASE("metrics lines") {
  StepResult r;
  r.step = 3;
  r.lr = 0.5;
  r.loss = 1.25;
  r.per_language = {{0, 2.0, 4}, {2, 3.0, 2}};
  CHECK(MetricsLine(r, LanguageTable({"en", "ru", "zh"})) ==
        R"({"step":3,"lr":0.5,"loss":1.25,"per_language_loss":{"en":0.5,"zh":1.5}})");
}

TEST_CASE("language extension preserves old behaviour") {
  auto world = MakeWorld(6);
  SyntheticOptions more;
  more.languages = DefaultSyntheticLanguages();
  more.languages.push_back({"el", {"α", "β", "γ", "δ", "ε", "ζ"}, false});
  more.languages.push_back({"ko", {"가", "나", "다", "라"}, true});
  more.utterances_per_language = 6;
  more.max_words = 2;
  const auto all = GenerateSynthetic(more);
  const auto new_vocab = world.vocab.Extend(Transcripts(all), 1);
  REQUIRE(new_vocab.size() >= world.vocab.size() + 10);
  const LanguageTable new_languages({"en", "ru", "zh", "el", "ko"});

  for (auto conditioning : {model::Conditioning::kBiasConcat,
                            model::Conditioning::kPerLanguageAdapter}) {
    CAPTURE(model::ToString(conditioning));
    auto state = InitialState<double>(TinyModel(conditioning, world.vocab.size()), QuietConfig(),
                                      world.languages, world.vocab.Hash(), {});
    Rng rng(4);
    testing::Randomize(state.params, rng, 0.3);
    {
      Trainer<double> warm(std::move(state), world.data);
      for (int i = 0; i < 3; ++i) warm.Step();
      state = std::move(warm).TakeState();
    }
    ExtensionOptions options;
    options.language_slots = 6;
    options.reset_slots = false;
    const auto grown = ExtendLanguages(state, new_languages, world.vocab, new_vocab, options);
    CHECK(grown.model.encoder.num_languages == 6);
    CHECK(grown.model.vocab_size == new_vocab.size());
    CHECK(grown.vocab_hash == new_vocab.Hash());
    CHECK(grown.step == state.step);
    CHECK(grown.schedule.weights.size() == 5);
    CHECK(grown.audit.back().source == "extend");
    if (conditioning == model::Conditioning::kBiasConcat) {
      const auto id = grown.params.Find("encoder/input_projection/w");
      REQUIRE(id);
      CHECK(grown.params.value(*id).dim(0) == 240 + 6);
    }

    Rng bind(0);
    const model::AsrModel<double> old_model(state.model, state.params, bind);
    auto grown_params = grown.params;
    const model::AsrModel<double> new_model(grown.model, grown_params, bind);
    for (std::size_t i : {0, 7, 14}) {
      const Example& e = world.data[i];
      const auto before = LogitsFor(old_model, state.params, e, e.language);
      const auto after = LogitsFor(new_model, grown.params, e, e.language);
      double worst = 0;
      for (std::size_t r = 0; r < before.rows(); ++r) {
        for (std::size_t v = 0; v < before.cols(); ++v) {
          worst = std::max(worst, std::abs(before(r, v) - after(r, v)));
        }
        for (std::size_t v = before.cols(); v < after.cols(); ++v) CHECK(after(r, v) == 0.0);
      }
      CHECK(worst <= 1e-6);
      // New languages start out identical to each other.
      const auto as_el = LogitsFor(new_model, grown.params, e, 3);
      const auto as_ko = LogitsFor(new_model, grown.params, e, 4);
      CHECK(as_el == as_ko);
    }

    // Slots follow the flag.
    for (nn::ParamId id = 0; id < grown.params.size(); ++id) {
      const auto old_id = state.params.Find(grown.params.name(id));
      if (old_id && state.params.value(*old_id).SameShape(grown.params.value(id))) {
        CHECK(grown.optimizer.slots()[id] == state.optimizer.slots()[*old_id]);
      }
    }
    options.reset_slots = true;
    const auto reset = ExtendLanguages(state, new_languages, world.vocab, new_vocab, options);
    for (const auto& s : reset.optimizer.slots()) CHECK(s.updates == 0);

    CHECK_THROWS_AS(ExtendLanguages(state, LanguageTable({"ru", "en", "zh", "el"}), world.vocab,
                                    new_vocab, options),
                    UsageError);
    CHECK_THROWS_AS(ExtendLanguages(state, new_languages, new_vocab, new_vocab, options),
                    UsageError);
    const auto shuffled = vocab::GraphemeVocab::Build(Transcripts(all), 1);
    if (shuffled.tokens() != new_vocab.tokens()) {
      CHECK_THROWS_AS(ExtendLanguages(state, new_languages, world.vocab, shuffled, options),
                      UsageError);
    }
  }
}
