#include "mlasr/harness/session.h"

#include <thread>

#include <fmt/format.h>

#include "json.hpp"
#include "mlasr/common/error.h"
#include "mlasr/harness/checkpoint.h"

namespace mlasr::harness {
namespace {

constexpr double kLossSmoothing = 0.1;

}  // namespace

std::string StatusSnapshot::ToJson() const {
  nlohmann::ordered_json j;
  j["state"] = state;
  j["step"] = step;
  j["max_steps"] = max_steps;
  j["lr"] = lr;
  j["loss"] = loss ? nlohmann::ordered_json(*loss) : nlohmann::ordered_json(nullptr);
  auto langs = nlohmann::ordered_json::array();
  for (const auto& l : languages) {
    nlohmann::ordered_json e;
    e["code"] = l.code;
    e["weight"] = l.weight;
    e["recent_loss"] = l.recent_loss ? nlohmann::ordered_json(*l.recent_loss) : nlohmann::ordered_json(nullptr);
    e["wer"] = l.wer ? nlohmann::ordered_json(*l.wer) : nlohmann::ordered_json(nullptr);
    langs.push_back(e);
  }
  j["languages"] = langs;
  j["mixing"] = {{"weights", schedule.weights}, {"effective_step", schedule.effective_step}};
  j["examples_per_second"] = examples_per_second;
  j["message"] = message;
  return j.dump();
}

IdleControl::IdleControl(StatusSnapshot snapshot, train::LanguageTable languages,
                         std::vector<train::AuditEntry> audit)
    : snapshot_(std::move(snapshot)), languages_(std::move(languages)), audit_(std::move(audit)) {
  snapshot_.state = "idle";
}

train::MixingAck IdleControl::SubmitMixing(train::MixingSchedule) {
  throw UsageError("no training run is active");
}
void IdleControl::Pause() { throw UsageError("no training run is active"); }
void IdleControl::Resume() { throw UsageError("no training run is active"); }
CheckpointResult IdleControl::CheckpointNow() { throw UsageError("no training run is active"); }

template <typename T>
TrainingSession<T>::TrainingSession(train::TrainState<T> state, const train::Dataset& data,
                                    SessionOptions options, const train::Dataset* dev,
                                    const vocab::GraphemeVocab* vocab)
    : trainer_(std::move(state), data), options_(std::move(options)), dev_(dev), vocab_(vocab) {
  if (options_.eval_every > 0 && (dev_ == nullptr || vocab_ == nullptr)) {
    throw UsageError("periodic evaluation needs a dev set and a vocabulary");
  }
  if (!options_.metrics_path.empty()) {
    metrics_file_.open(options_.metrics_path, std::ios::app);
    if (!metrics_file_) throw IoError(fmt::format("cannot open metrics log '{}'", options_.metrics_path));
  }
  audit_ = trainer_.state().audit;
  Publish(nullptr, "idle");
}

template <typename T>
void TrainingSession<T>::Publish(const train::StepResult* result, const std::string& state) {
  const auto& s = trainer_.state();
  std::lock_guard lock(status_mutex_);
  StatusSnapshot snap;
  snap.state = state;
  snap.step = s.step;
  snap.max_steps = options_.max_steps;
  snap.schedule = s.schedule;
  if (result != nullptr) {
    snap.lr = result->lr;
    snap.loss = result->loss;
    for (const auto& l : result->per_language) {
      auto [it, fresh] = recent_loss_.try_emplace(l.language, l.loss());
      if (!fresh) it->second += kLossSmoothing * (l.loss() - it->second);
    }
  } else {
    snap.lr = snapshot_.lr;
    snap.loss = snapshot_.loss;
  }
  for (int id = 0; id < s.languages.size(); ++id) {
    LanguageStatus l;
    l.code = s.languages.code(id);
    l.weight = s.schedule.weights.at(static_cast<std::size_t>(id));
    if (auto it = recent_loss_.find(id); it != recent_loss_.end()) l.recent_loss = it->second;
    if (auto it = latest_wer_.find(id); it != latest_wer_.end()) l.wer = it->second;
    snap.languages.push_back(std::move(l));
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  snap.examples_per_second = examples_seen_ > 0 && elapsed > 0 ? examples_seen_ / elapsed : 0.0;
  audit_ = s.audit;
  snapshot_ = std::move(snap);
}

template <typename T>
StatusSnapshot TrainingSession<T>::Status() const {
  std::lock_guard lock(status_mutex_);
  return snapshot_;
}

template <typename T>
std::vector<std::string> TrainingSession<T>::MetricsSince(std::int64_t since) const {
  std::lock_guard lock(status_mutex_);
  std::vector<std::string> out;
  auto it = std::upper_bound(metrics_.begin(), metrics_.end(), since,
                             [](std::int64_t s, const auto& m) { return s < m.first; });
  for (; it != metrics_.end(); ++it) out.push_back(it->second);
  return out;
}

template <typename T>
std::vector<train::AuditEntry> TrainingSession<T>::Audit() const {
  std::lock_guard lock(status_mutex_);
  return audit_;
}

template <typename T>
std::vector<train::StepResult> TrainingSession<T>::results() const {
  std::lock_guard lock(status_mutex_);
  return results_;
}

template <typename T>
train::MixingAck TrainingSession<T>::SubmitMixing(train::MixingSchedule schedule) {
  return trainer_.SubmitMixing(std::move(schedule), "http");
}

template <typename T>
void TrainingSession<T>::Pause() {
  std::lock_guard lock(control_mutex_);
  paused_ = true;
}

template <typename T>
void TrainingSession<T>::Resume() {
  {
    std::lock_guard lock(control_mutex_);
    paused_ = false;
  }
  control_cv_.notify_all();
}

template <typename T>
void TrainingSession<T>::Stop() {
  {
    std::lock_guard lock(control_mutex_);
    stop_ = true;
  }
  control_cv_.notify_all();
}

template <typename T>
CheckpointResult TrainingSession<T>::CheckpointNow() {
  if (options_.checkpoint_path.empty()) throw UsageError("no checkpoint path configured");
  std::unique_lock lock(control_mutex_);
  if (!running_) {
    WriteCheckpoint();
    return last_checkpoint_;
  }
  const std::uint64_t ticket = ++checkpoint_requests_;
  control_cv_.notify_all();
  control_cv_.wait(lock, [&] { return checkpoints_done_ >= ticket || !running_; });
  if (checkpoints_done_ < ticket) throw UsageError("run ended before the checkpoint was written");
  return last_checkpoint_;
}

template <typename T>
void TrainingSession<T>::WriteCheckpoint() {
  SaveCheckpoint(options_.checkpoint_path, trainer_.state());
  last_checkpoint_ = {options_.checkpoint_path, trainer_.state().step};
}

// Called with control_mutex_ held.
template <typename T>
void TrainingSession<T>::ServeCheckpointRequests() {
  if (checkpoints_done_ < checkpoint_requests_) {
    WriteCheckpoint();
    checkpoints_done_ = checkpoint_requests_;
    control_cv_.notify_all();
  }
}

template <typename T>
void TrainingSession<T>::EvaluateDev() {
  eval::EvaluateOptions eo;
  eo.decode = options_.eval_decode;
  const auto report = eval::Evaluate(trainer_.model(), trainer_.state().params, *vocab_,
                                     trainer_.state().languages, *dev_, eo);
  std::lock_guard lock(status_mutex_);
  for (const auto& [code, score] : report.languages()) {
    latest_wer_[trainer_.state().languages.Id(code)] = score.counts.wer();
  }
}

template <typename T>
void TrainingSession<T>::Run() {
  running_ = true;
  started_ = std::chrono::steady_clock::now();
  examples_seen_ = 0;
  Publish(nullptr, "running");
  try {
    while (true) {
      {
        std::unique_lock lock(control_mutex_);
        ServeCheckpointRequests();
        if (paused_ && !stop_) Publish(nullptr, "paused");
        while (paused_ && !stop_) {
          control_cv_.wait(lock, [&] {
            return !paused_ || stop_ || checkpoints_done_ < checkpoint_requests_;
          });
          ServeCheckpointRequests();
        }
        if (stop_ || trainer_.state().step >= options_.max_steps) break;
      }
      const auto result = trainer_.Step();
      examples_seen_ += static_cast<std::int64_t>(result.batch.size());
      const std::string line = train::MetricsLine(result, trainer_.state().languages);
      if (metrics_file_.is_open()) metrics_file_ << line << '\n' << std::flush;
      {
        std::lock_guard lock(status_mutex_);
        metrics_.emplace_back(result.step, line);
        results_.push_back(result);
      }
      if (options_.eval_every > 0 && result.step % options_.eval_every == 0) EvaluateDev();
      Publish(&result, "running");
      if (!options_.checkpoint_path.empty() && options_.checkpoint_every > 0 &&
          result.step % options_.checkpoint_every == 0) {
        std::lock_guard lock(control_mutex_);
        WriteCheckpoint();
      }
      if (options_.step_delay.count() > 0) std::this_thread::sleep_for(options_.step_delay);
    }
    std::unique_lock lock(control_mutex_);
    if (!options_.checkpoint_path.empty()) WriteCheckpoint();
    ServeCheckpointRequests();
    running_ = false;
    control_cv_.notify_all();
  } catch (const std::exception& e) {
    {
      std::lock_guard lock(control_mutex_);
      running_ = false;
    }
    control_cv_.notify_all();
    Publish(nullptr, "failed");
    {
      std::lock_guard lock(status_mutex_);
      snapshot_.message = e.what();
    }
    throw;
  }
  Publish(nullptr, "finished");
}

template <typename T>
train::TrainState<T> TrainingSession<T>::TakeState() && {
  return std::move(trainer_).TakeState();
}

template class TrainingSession<float>;
template class TrainingSession<double>;

}  // namespace mlasr::harness
