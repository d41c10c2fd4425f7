#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mlasr/eval/evaluate.h"
#include "mlasr/train/trainer.h"

namespace mlasr::harness {

struct LanguageStatus {
  std::string code;
  double weight = 0;
  std::optional<double> recent_loss;  // moving average of batch losses
  std::optional<double> wer;          // latest periodic evaluation
};

// Immutable view of a run, published once per completed step.
struct StatusSnapshot {
  std::string state = "idle";  // idle, running, paused, finished, failed
  std::int64_t step = 0;
  std::int64_t max_steps = 0;
  double lr = 0;
  std::optional<double> loss;
  std::vector<LanguageStatus> languages;
  train::MixingSchedule schedule;
  double examples_per_second = 0;
  std::string message;

  std::string ToJson() const;
};

struct CheckpointResult {
  std::string path;
  std::int64_t step = 0;
};

// What the HTTP surface may touch: status, metrics, the mixing schedule and
// the run lifecycle.
class ControlSurface {
 public:
  virtual ~ControlSurface() = default;
  virtual StatusSnapshot Status() const = 0;
  // Metrics lines with step > since, oldest first.
  virtual std::vector<std::string> MetricsSince(std::int64_t since) const = 0;
  virtual std::vector<train::AuditEntry> Audit() const = 0;
  virtual train::LanguageTable Languages() const = 0;
  // Throws UsageError when rejected; the schedule is then unchanged.
  virtual train::MixingAck SubmitMixing(train::MixingSchedule schedule) = 0;
  virtual void Pause() = 0;
  virtual void Resume() = 0;
  // Blocks until the training thread has written the checkpoint.
  virtual CheckpointResult CheckpointNow() = 0;
};

// Surface for `serve` without a run: a static idle snapshot; every mutation
// is rejected with UsageError.
class IdleControl final : public ControlSurface {
 public:
  explicit IdleControl(StatusSnapshot snapshot = {}, train::LanguageTable languages = {},
                       std::vector<train::AuditEntry> audit = {});
  StatusSnapshot Status() const override { return snapshot_; }
  std::vector<std::string> MetricsSince(std::int64_t) const override { return {}; }
  std::vector<train::AuditEntry> Audit() const override { return audit_; }
  train::LanguageTable Languages() const override { return languages_; }
  train::MixingAck SubmitMixing(train::MixingSchedule) override;
  void Pause() override;
  void Resume() override;
  CheckpointResult CheckpointNow() override;

 private:
  StatusSnapshot snapshot_;
  train::LanguageTable languages_;
  std::vector<train::AuditEntry> audit_;
};

struct SessionOptions {
  std::int64_t max_steps = 0;  // run until state.step reaches this
  std::string checkpoint_path;  // empty disables checkpoints
  std::int64_t checkpoint_every = 0;
  std::string metrics_path;  // appended; empty keeps metrics in memory only
  std::int64_t eval_every = 0;
  model::DecodeOptions eval_decode{1, 0};
  // Steps are delayed by this much; lets a human follow a toy run live.
  std::chrono::milliseconds step_delay{0};
};

template <typename T>
class TrainingSession final : public ControlSurface {
 public:
  // `dev` and `vocab` enable periodic WER when eval_every > 0.
  TrainingSession(train::TrainState<T> state, const train::Dataset& data, SessionOptions options,
                  const train::Dataset* dev = nullptr, const vocab::GraphemeVocab* vocab = nullptr);

  // Runs the loop on the calling thread until max_steps or Stop(). Writes a
  // final checkpoint when a path is configured.
  void Run();
  void Stop();
  std::vector<train::StepResult> results() const;
  train::TrainState<T> TakeState() &&;
  const train::Trainer<T>& trainer() const { return trainer_; }

  StatusSnapshot Status() const override;
  std::vector<std::string> MetricsSince(std::int64_t since) const override;
  std::vector<train::AuditEntry> Audit() const override;
  train::LanguageTable Languages() const override { return trainer_.state().languages; }
  train::MixingAck SubmitMixing(train::MixingSchedule schedule) override;
  void Pause() override;
  void Resume() override;
  CheckpointResult CheckpointNow() override;

 private:
  void Publish(const train::StepResult* result, const std::string& state);
  void WriteCheckpoint();
  void ServeCheckpointRequests();
  void EvaluateDev();

  train::Trainer<T> trainer_;
  SessionOptions options_;
  const train::Dataset* dev_;
  const vocab::GraphemeVocab* vocab_;
  std::ofstream metrics_file_;

  mutable std::mutex status_mutex_;
  StatusSnapshot snapshot_;
  std::vector<std::pair<std::int64_t, std::string>> metrics_;
  std::vector<train::AuditEntry> audit_;
  std::vector<train::StepResult> results_;
  std::map<int, double> recent_loss_;
  std::map<int, double> latest_wer_;

  std::mutex control_mutex_;
  std::condition_variable control_cv_;
  bool paused_ = false;
  bool stop_ = false;
  std::uint64_t checkpoint_requests_ = 0;
  std::uint64_t checkpoints_done_ = 0;
  CheckpointResult last_checkpoint_;
  std::atomic<bool> running_{false};

  std::chrono::steady_clock::time_point started_;
  std::int64_t examples_seen_ = 0;
};

extern template class TrainingSession<float>;
extern template class TrainingSession<double>;

}  // namespace mlasr::harness
