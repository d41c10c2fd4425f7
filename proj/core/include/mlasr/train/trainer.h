#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlasr/common/key_value.h"
#include "mlasr/frontend/features.h"
#include "mlasr/model/model.h"
#include "mlasr/train/data.h"
#include "mlasr/train/mixing.h"
#include "mlasr/train/optimizer.h"

namespace mlasr::train {

struct TrainConfig {
  int batch_size = 32;
  ScheduleConfig schedule;
  OptimizerConfig optimizer;
  frontend::SpecAugmentPolicy augment;
  // Batch shards whose gradients are computed on separate threads and
  // summed in shard order.
  int workers = 1;
  std::uint64_t seed = 1;
  // Warm start: start the optimizer fresh instead of carrying slots over.
  bool reset_slots_on_extend = true;

  void Validate() const;
  // Keys are prefixed "train.", so model and training settings can share
  // one file.
  KeyValues ToKeyValues() const;
  static TrainConfig FromKeyValues(const KeyValues& kv);
  static std::vector<std::string> Keys();
  bool operator==(const TrainConfig&) const = default;
};

// One applied or re-submitted mixing schedule.
struct AuditEntry {
  std::int64_t submitted_after_step = 0;
  std::int64_t effective_step = 0;
  std::vector<double> weights;  // normalized
  bool changed = true;
  std::string source;
  bool operator==(const AuditEntry&) const = default;
};

template <typename T>
struct TrainState {
  model::ModelConfig model;
  TrainConfig train;
  LanguageTable languages;
  std::uint64_t vocab_hash = 0;
  frontend::FeatureNormalizer normalizer;
  std::int64_t step = 0;  // completed updates
  nn::ParameterSet<T> params;
  Optimizer<T> optimizer;
  Rng sampler_rng;
  Rng augment_rng;
  MixingSchedule schedule;
  // Schedules replaced so far, oldest first.
  std::vector<MixingSchedule> history;
  std::vector<AuditEntry> audit;
};

// Fresh parameters and slots; the schedule defaults to uniform weights.
template <typename T>
TrainState<T> InitialState(const model::ModelConfig& model, const TrainConfig& train,
                           const LanguageTable& languages, std::uint64_t vocab_hash,
                           frontend::FeatureNormalizer normalizer,
                           std::optional<MixingSchedule> schedule = std::nullopt);

// Installs `schedule` from the next batch on and archives the previous one.
// Resubmitting the active weights changes nothing but the audit log.
template <typename T>
AuditEntry ApplyMixing(TrainState<T>& state, MixingSchedule schedule, std::string source = "api");

struct ExtensionOptions {
  // Width of the language one-hot / adapter table; 0 means the new
  // language count.
  int language_slots = 0;
  // Family id per language of the new table; required for per-family routing.
  std::vector<int> families;
  bool reset_slots = true;
};

// Warm start onto a larger language table and vocabulary. Old parameters
// are copied; grown rows and columns and brand-new adapter outputs are
// zero, so old-language logits over old tokens are unchanged. New languages
// get the mean of the old mixing weights.
template <typename T>
TrainState<T> ExtendLanguages(const TrainState<T>& state, const LanguageTable& new_languages,
                              const vocab::GraphemeVocab& old_vocab,
                              const vocab::GraphemeVocab& new_vocab,
                              const ExtensionOptions& options);

struct LanguageLoss {
  int language = 0;
  double nll = 0;
  std::int64_t tokens = 0;
  double loss() const { return tokens > 0 ? nll / double(tokens) : 0.0; }
};

struct StepResult {
  std::int64_t step = 0;
  double lr = 0;
  double loss = 0;  // mean NLL per target token
  std::vector<LanguageLoss> per_language;  // languages present in the batch
  std::vector<std::size_t> batch;
  std::int64_t tokens = 0;
};

// {step, lr, loss, per_language_loss: {code: loss}}
std::string MetricsLine(const StepResult& result, const LanguageTable& languages);

struct MixingAck {
  std::int64_t effective_step = 0;
  std::vector<double> weights;
};

// Owns the training state and runs the loop body. Step() must be called
// from one thread; SubmitMixing may be called from any thread.
template <typename T>
class Trainer {
 public:
  Trainer(TrainState<T> state, const Dataset& data);

  StepResult Step();
  // One update on a caller-chosen batch; used for overfitting checks.
  StepResult StepOn(std::span<const std::size_t> batch);
  // Mean per-token loss without touching state.
  double Loss(std::span<const std::size_t> batch) const;

  // Queues a schedule for the next batch boundary; last writer wins and
  // every submission is audited. Throws UsageError on invalid weights.
  MixingAck SubmitMixing(MixingSchedule schedule, std::string source = "http");

  const TrainState<T>& state() const { return state_; }
  TrainState<T> TakeState() &&;
  const model::AsrModel<T>& model() const { return model_; }
  const Dataset& data() const { return data_; }

 private:
  struct Pending {
    MixingSchedule schedule;
    std::string source;
  };
  void DrainMixing();
  StepResult Run(std::vector<std::size_t> batch);

  TrainState<T> state_;
  const Dataset& data_;
  model::AsrModel<T> model_;
  std::mutex mixing_mutex_;
  std::vector<Pending> pending_;
  std::int64_t next_unsampled_step_;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace mlasr::train
