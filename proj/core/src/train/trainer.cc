#include "mlasr/train/trainer.h"

#include <algorithm>
#include <cmath>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "json.hpp"
#include "mlasr/common/error.h"

namespace mlasr::train {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::vector<std::string> Prefixed(std::initializer_list<const char*> keys) {
  std::vector<std::string> out;
  for (const char* k : keys) out.push_back(std::string("train.") + k);
  return out;
}

}  // namespace

void TrainConfig::Validate() const {
  if (batch_size < 1) throw ConfigError(fmt::format("train.batch_size must be >= 1, got {}", batch_size));
  if (workers < 1) throw ConfigError(fmt::format("train.workers must be >= 1, got {}", workers));
  schedule.Validate();
  optimizer.Validate();
  augment.Validate();
}

std::vector<std::string> TrainConfig::Keys() {
  return Prefixed({"batch_size", "peak_lr", "warmup_steps", "optimizer", "beta1", "beta2",
                   "epsilon", "clip_threshold", "specaugment.freq_masks",
                   "specaugment.max_freq_len", "specaugment.time_masks",
                   "specaugment.max_time_len", "workers", "seed", "reset_slots_on_extend"});
}

KeyValues TrainConfig::ToKeyValues() const {
  KeyValues kv;
  auto put = [&](const char* key, auto value) { kv.Set(std::string("train.") + key, fmt::format("{}", value)); };
  put("batch_size", batch_size);
  put("peak_lr", schedule.peak_lr);
  put("warmup_steps", schedule.warmup_steps);
  put("optimizer", ToString(optimizer.kind));
  put("beta1", optimizer.beta1);
  put("beta2", optimizer.beta2);
  put("epsilon", optimizer.epsilon);
  put("clip_threshold", optimizer.clip_threshold);
  put("specaugment.freq_masks", augment.num_freq_masks);
  put("specaugment.max_freq_len", augment.max_freq_len);
  put("specaugment.time_masks", augment.num_time_masks);
  put("specaugment.max_time_len", augment.max_time_len);
  put("workers", workers);
  put("seed", seed);
  put("reset_slots_on_extend", reset_slots_on_extend ? "true" : "false");
  return kv;
}

TrainConfig TrainConfig::FromKeyValues(const KeyValues& kv) {
  std::vector<std::string> train_keys;
  for (const auto& [k, v] : kv.entries()) {
    if (k.starts_with("train.")) train_keys.push_back(k);
  }
  const auto known = Keys();
  for (const auto& k : train_keys) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError(fmt::format("unknown config key '{}'", k));
    }
  }
  TrainConfig c;
  auto i = [&](const char* key, long long fallback) { return kv.GetInt(std::string("train.") + key, fallback); };
  auto d = [&](const char* key, double fallback) { return kv.GetDouble(std::string("train.") + key, fallback); };
  c.optimizer.kind = ParseOptimizerKind(kv.GetString("train.optimizer", ToString(c.optimizer.kind)));
  if (c.optimizer.kind == OptimizerKind::kAdafactor) c.optimizer = OptimizerConfig::Adafactor();
  c.batch_size = static_cast<int>(i("batch_size", c.batch_size));
  c.schedule.peak_lr = d("peak_lr", c.schedule.peak_lr);
  c.schedule.warmup_steps = i("warmup_steps", c.schedule.warmup_steps);
  c.optimizer.beta1 = d("beta1", c.optimizer.beta1);
  c.optimizer.beta2 = d("beta2", c.optimizer.beta2);
  c.optimizer.epsilon = d("epsilon", c.optimizer.epsilon);
  c.optimizer.clip_threshold = d("clip_threshold", c.optimizer.clip_threshold);
  c.augment.num_freq_masks = static_cast<int>(i("specaugment.freq_masks", c.augment.num_freq_masks));
  c.augment.max_freq_len = static_cast<int>(i("specaugment.max_freq_len", c.augment.max_freq_len));
  c.augment.num_time_masks = static_cast<int>(i("specaugment.time_masks", c.augment.num_time_masks));
  c.augment.max_time_len = static_cast<int>(i("specaugment.max_time_len", c.augment.max_time_len));
  c.workers = static_cast<int>(i("workers", c.workers));
  c.seed = static_cast<std::uint64_t>(i("seed", static_cast<long long>(c.seed)));
  c.reset_slots_on_extend = kv.GetBool("train.reset_slots_on_extend", c.reset_slots_on_extend);
  c.Validate();
  return c;
}

template <typename T>
TrainState<T> InitialState(const model::ModelConfig& model, const TrainConfig& train,
                           const LanguageTable& languages, std::uint64_t vocab_hash,
                           frontend::FeatureNormalizer normalizer,
                           std::optional<MixingSchedule> schedule) {
  model.Validate();
  train.Validate();
  if (languages.size() < 1 || languages.size() > model.num_languages()) {
    throw UsageError(fmt::format("{} languages do not fit a model built for {}", languages.size(),
                                 model.num_languages()));
  }
  TrainState<T> s;
  s.model = model;
  s.train = train;
  s.languages = languages;
  s.vocab_hash = vocab_hash;
  s.normalizer = std::move(normalizer);
  Rng init(train.seed);
  model::AsrModel<T> built(model, s.params, init);
  s.optimizer = Optimizer<T>(train.optimizer, s.params);
  s.sampler_rng = Rng(train.seed + kGolden);
  s.augment_rng = Rng(train.seed + 2 * kGolden);
  if (schedule) {
    s.schedule = std::move(*schedule);
  } else {
    s.schedule.weights.assign(static_cast<std::size_t>(languages.size()), 1.0);
  }
  if (static_cast<int>(s.schedule.weights.size()) != languages.size()) {
    throw UsageError(fmt::format("mixing schedule has {} weights for {} languages",
                                 s.schedule.weights.size(), languages.size()));
  }
  s.schedule.weights = s.schedule.Normalized();
  s.schedule.effective_step = 1;
  return s;
}

template <typename T>
AuditEntry ApplyMixing(TrainState<T>& state, MixingSchedule schedule, std::string source) {
  if (static_cast<int>(schedule.weights.size()) != state.languages.size()) {
    throw UsageError(fmt::format("mixing schedule has {} weights for {} languages",
                                 schedule.weights.size(), state.languages.size()));
  }
  schedule.weights = schedule.Normalized();
  AuditEntry entry;
  entry.submitted_after_step = state.step;
  entry.effective_step = state.step + 1;
  entry.weights = schedule.weights;
  entry.source = std::move(source);
  entry.changed = schedule.weights != state.schedule.weights;
  if (entry.changed) {
    state.history.push_back(state.schedule);
    schedule.effective_step = entry.effective_step;
    state.schedule = std::move(schedule);
  }
  state.audit.push_back(entry);
  return entry;
}

template <typename T>
TrainState<T> ExtendLanguages(const TrainState<T>& state, const LanguageTable& new_languages,
                              const vocab::GraphemeVocab& old_vocab,
                              const vocab::GraphemeVocab& new_vocab,
                              const ExtensionOptions& options) {
  if (old_vocab.Hash() != state.vocab_hash) {
    throw UsageError("extend: old vocabulary does not match the checkpoint's vocabulary hash");
  }
  if (!state.languages.IsPrefixOf(new_languages)) {
    throw UsageError(fmt::format("extend: new language table [{}] does not start with [{}]",
                                 fmt::join(new_languages.codes(), ", "),
                                 fmt::join(state.languages.codes(), ", ")));
  }
  const auto& old_tokens = old_vocab.tokens();
  const auto& new_tokens = new_vocab.tokens();
  if (new_tokens.size() < old_tokens.size() ||
      !std::equal(old_tokens.begin(), old_tokens.end(), new_tokens.begin())) {
    throw UsageError("extend: new vocabulary must keep every old token at its old id");
  }

  model::ModelConfig config = state.model;
  const int slots = options.language_slots > 0 ? options.language_slots : new_languages.size();
  if (slots < new_languages.size() || slots < config.encoder.num_languages) {
    throw UsageError(fmt::format("extend: {} language slots cannot hold {} languages or shrink {}",
                                 slots, new_languages.size(), config.encoder.num_languages));
  }
  config.encoder.num_languages = slots;
  config.vocab_size = static_cast<int>(new_vocab.size());
  if (config.decoder.routing == model::Routing::kPerFamily) {
    const auto& old_families = state.model.decoder.families;
    if (options.families.size() != static_cast<std::size_t>(slots) ||
        !std::equal(old_families.begin(), old_families.end(), options.families.begin())) {
      throw UsageError(fmt::format(
          "extend: per-family routing needs {} family ids that start with the old ones", slots));
    }
    config.decoder.families = options.families;
  }
  config.Validate();

  TrainState<T> out;
  out.model = config;
  out.train = state.train;
  out.train.reset_slots_on_extend = options.reset_slots;
  out.languages = new_languages;
  out.vocab_hash = new_vocab.Hash();
  out.normalizer = state.normalizer;
  out.step = state.step;
  Rng init(state.train.seed ^ (static_cast<std::uint64_t>(state.step) * kGolden));
  model::AsrModel<T> built(config, out.params, init);
  out.optimizer = Optimizer<T>(state.train.optimizer, out.params);

  for (nn::ParamId id = 0; id < out.params.size(); ++id) {
    const std::string& name = out.params.name(id);
    auto& dst = out.params.value(id);
    const auto old_id = state.params.Find(name);
    if (!old_id) {
      // New adapter entries start as identity residuals.
      if (name.starts_with("encoder/adapter/") && name.find("/up/") != std::string::npos) {
        dst.Fill(T(0));
      }
      continue;
    }
    const auto& src = state.params.value(*old_id);
    if (dst.SameShape(src)) {
      dst = src;
      if (!options.reset_slots) out.optimizer.slots()[id] = state.optimizer.slots()[*old_id];
      continue;
    }
    const bool grows = src.rank() == dst.rank() && src.rank() >= 1 && src.rank() <= 2 &&
                       src.dim(0) <= dst.dim(0) && (src.rank() == 1 || src.dim(1) <= dst.dim(1));
    if (!grows) {
      throw UsageError(fmt::format("extend: parameter '{}' changed shape in a way that cannot grow",
                                   name));
    }
    dst.Fill(T(0));
    if (src.rank() == 1) {
      std::copy(src.values().begin(), src.values().end(), dst.values().begin());
    } else {
      for (std::size_t r = 0; r < src.dim(0); ++r) {
        std::copy(src.row(r).begin(), src.row(r).end(), dst.row(r).begin());
      }
    }
  }

  out.sampler_rng = state.sampler_rng;
  out.augment_rng = state.augment_rng;
  const auto old_weights = state.schedule.Normalized();
  double mean = 0;
  for (double w : old_weights) mean += w;
  mean /= static_cast<double>(old_weights.size());
  out.schedule = state.schedule;
  out.schedule.weights = old_weights;
  out.schedule.weights.resize(static_cast<std::size_t>(new_languages.size()), mean);
  out.schedule.weights = out.schedule.Normalized();
  out.schedule.effective_step = state.step + 1;
  out.history = state.history;
  out.history.push_back(state.schedule);
  out.audit = state.audit;
  AuditEntry entry;
  entry.submitted_after_step = state.step;
  entry.effective_step = state.step + 1;
  entry.weights = out.schedule.weights;
  entry.source = "extend";
  out.audit.push_back(entry);
  return out;
}

std::string MetricsLine(const StepResult& result, const LanguageTable& languages) {
  nlohmann::ordered_json j;
  j["step"] = result.step;
  j["lr"] = result.lr;
  j["loss"] = result.loss;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& l : result.per_language) per[languages.code(l.language)] = l.loss();
  j["per_language_loss"] = per;
  return j.dump();
}

template <typename T>
Trainer<T>::Trainer(TrainState<T> state, const Dataset& data)
    : state_(std::move(state)),
      data_(data),
      model_([this]() -> model::AsrModel<T> {
        Rng unused(0);
        return model::AsrModel<T>(state_.model, state_.params, unused);
      }()),
      next_unsampled_step_(state_.step + 1) {
  if (static_cast<int>(data_.by_language().size()) != state_.languages.size()) {
    throw UsageError(fmt::format("dataset covers {} languages, the model's table has {}",
                                 data_.by_language().size(), state_.languages.size()));
  }
  if (state_.optimizer.slots().size() != state_.params.size()) {
    throw UsageError("train state: optimizer slots do not match the parameters");
  }
}

template <typename T>
MixingAck Trainer<T>::SubmitMixing(MixingSchedule schedule, std::string source) {
  if (static_cast<int>(schedule.weights.size()) != state_.languages.size()) {
    throw UsageError(fmt::format("mixing schedule has {} weights for {} languages",
                                 schedule.weights.size(), state_.languages.size()));
  }
  MixingAck ack;
  ack.weights = schedule.Normalized();
  std::lock_guard lock(mixing_mutex_);
  ack.effective_step = next_unsampled_step_;
  pending_.push_back({std::move(schedule), std::move(source)});
  return ack;
}

template <typename T>
void Trainer<T>::DrainMixing() {
  std::lock_guard lock(mixing_mutex_);
  for (auto& p : pending_) ApplyMixing(state_, std::move(p.schedule), std::move(p.source));
  pending_.clear();
  next_unsampled_step_ = state_.step + 2;
}

template <typename T>
StepResult Trainer<T>::Step() {
  DrainMixing();
  auto batch = SampleBatch(data_.by_language(), state_.schedule, state_.train.batch_size,
                           state_.sampler_rng);
  return Run(std::move(batch));
}

template <typename T>
StepResult Trainer<T>::StepOn(std::span<const std::size_t> batch) {
  DrainMixing();
  return Run(std::vector<std::size_t>(batch.begin(), batch.end()));
}

template <typename T>
double Trainer<T>::Loss(std::span<const std::size_t> batch) const {
  double nll = 0;
  std::int64_t tokens = 0;
  for (std::size_t index : batch) {
    const Example& e = data_[index];
    nn::Graph<T> g;
    const auto loss = model_.Loss(g, state_.params, nn::Cast<T>(e.features), e.language, e.tokens);
    nll += g.value(loss)[0];
    tokens += static_cast<std::int64_t>(e.tokens.size()) - 1;
  }
  return nll / static_cast<double>(tokens);
}

template <typename T>
StepResult Trainer<T>::Run(std::vector<std::size_t> batch) {
  if (batch.empty()) throw UsageError("train_step: empty batch");
  StepResult result;
  result.step = state_.step + 1;
  result.lr = LrAt(result.step, state_.train.schedule);

  // Augmentation draws happen in batch order, so they do not depend on the
  // worker count.
  std::vector<nn::Tensor<T>> features(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Example& e = data_[batch[b]];
    frontend::FeatureFrames frames{e.features, 30};
    frames = frontend::SpecAugment(frames, state_.train.augment, state_.augment_rng);
    features[b] = nn::Cast<T>(frames.frames);
    result.tokens += static_cast<std::int64_t>(e.tokens.size()) - 1;
  }
  if (result.tokens <= 0) throw UsageError("train_step: batch has no target tokens");

  const T seed_value = static_cast<T>(1.0 / static_cast<double>(result.tokens));
  std::vector<double> nll(batch.size(), 0.0);
  const int workers = std::min<int>(state_.train.workers, static_cast<int>(batch.size()));
  std::vector<nn::Gradients<T>> shard_grads(static_cast<std::size_t>(workers));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  auto run_shard = [&](int w) {
    try {
      auto& grads = shard_grads[static_cast<std::size_t>(w)];
      grads = nn::Gradients<T>(state_.params);
      const std::size_t begin = batch.size() * static_cast<std::size_t>(w) / workers;
      const std::size_t end = batch.size() * static_cast<std::size_t>(w + 1) / workers;
      for (std::size_t b = begin; b < end; ++b) {
        const Example& e = data_[batch[b]];
        nn::Graph<T> g;
        const auto loss = model_.Loss(g, state_.params, features[b], e.language, e.tokens);
        nll[b] = g.value(loss)[0];
        if (!std::isfinite(nll[b])) continue;
        g.Backward(loss, nn::Tensor<T>({1}, {seed_value}));
        g.AccumulateParamGrads(state_.params, grads);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  if (workers == 1) {
    run_shard(0);
  } else {
    std::vector<std::jthread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(run_shard, w);
  }
  auto batch_ids = [&] {
    std::vector<std::string> ids;
    for (std::size_t index : batch) ids.push_back(data_[index].id);
    return fmt::format("{}", fmt::join(ids, ", "));
  };
  for (const auto& e : errors) {
    if (!e) continue;
    try {
      std::rethrow_exception(e);
    } catch (const NumericError& numeric) {
      throw NumericError(fmt::format("step {}: {} on batch [{}]", result.step, numeric.what(),
                                     batch_ids()));
    }
  }

  double total = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Example& e = data_[batch[b]];
    total += nll[b];
    auto it = std::find_if(result.per_language.begin(), result.per_language.end(),
                           [&](const LanguageLoss& l) { return l.language == e.language; });
    if (it == result.per_language.end()) {
      result.per_language.push_back({e.language, 0.0, 0});
      it = result.per_language.end() - 1;
    }
    it->nll += nll[b];
    it->tokens += static_cast<std::int64_t>(e.tokens.size()) - 1;
  }
  std::sort(result.per_language.begin(), result.per_language.end(),
            [](const LanguageLoss& a, const LanguageLoss& b) { return a.language < b.language; });
  result.loss = total / static_cast<double>(result.tokens);
  if (!std::isfinite(result.loss)) {
    throw NumericError(fmt::format("step {}: non-finite loss {} on batch [{}]", result.step,
                                   result.loss, batch_ids()));
  }

  for (int w = 1; w < workers; ++w) shard_grads[0].Accumulate(shard_grads[static_cast<std::size_t>(w)]);
  state_.optimizer.Update(state_.params, shard_grads[0], result.lr);
  state_.step = result.step;
  result.batch = std::move(batch);
  return result;
}

template <typename T>
TrainState<T> Trainer<T>::TakeState() && {
  DrainMixing();
  return std::move(state_);
}

#define MLASR_INSTANTIATE(T)                                                                    \
  template TrainState<T> InitialState<T>(const model::ModelConfig&, const TrainConfig&,         \
                                         const LanguageTable&, std::uint64_t,                   \
                                         frontend::FeatureNormalizer,                           \
                                         std::optional<MixingSchedule>);                        \
  template AuditEntry ApplyMixing<T>(TrainState<T>&, MixingSchedule, std::string);              \
  template TrainState<T> ExtendLanguages<T>(const TrainState<T>&, const LanguageTable&,         \
                                            const vocab::GraphemeVocab&,                        \
                                            const vocab::GraphemeVocab&, const ExtensionOptions&); \
  template class Trainer<T>;

MLASR_INSTANTIATE(float)
MLASR_INSTANTIATE(double)

#undef MLASR_INSTANTIATE

}  // namespace mlasr::train
