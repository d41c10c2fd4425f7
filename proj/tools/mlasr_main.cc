// mlasr: vocabulary building, training with live HTTP control, evaluation,
// capacity planning and language extension from one binary.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "mlasr/capacity/capacity.h"
#include "mlasr/common/error.h"
#include "mlasr/common/key_value.h"
#include "mlasr/eval/evaluate.h"
#include "mlasr/harness/checkpoint.h"
#include "mlasr/harness/server.h"
#include "mlasr/harness/session.h"
#include "mlasr/train/data.h"
#include "mlasr/train/trainer.h"
#include "mlasr/vocab/vocab.h"

namespace {

using namespace mlasr;

constexpr int kDefaultServePort = 8080;

std::atomic<bool> g_interrupted{false};

extern "C" void OnSignal(int) { g_interrupted = true; }

std::vector<std::string> SplitCsv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> SplitCsvInts(const std::string& text) {
  std::vector<int> out;
  for (const auto& item : SplitCsv(text)) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw UsageError(fmt::format("'{}' is not an integer", item));
    }
  }
  return out;
}

std::vector<train::UtteranceRecord> LoadManifests(const std::vector<std::string>& paths) {
  std::vector<train::UtteranceRecord> records;
  for (const auto& p : paths) {
    auto part = train::LoadManifest(p);
    records.insert(records.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
  }
  if (records.empty()) throw UsageError("the manifests contain no utterances");
  return records;
}

std::vector<vocab::TaggedText> Tagged(const std::vector<train::UtteranceRecord>& records) {
  std::vector<vocab::TaggedText> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.language_code, r.transcript});
  return out;
}

// ---- build-vocab ----------------------------------------------------------

struct BuildVocabArgs {
  std::vector<std::string> manifests;
  int min_count = 1;
  std::string base;
  std::string output;
};

int BuildVocab(const BuildVocabArgs& a) {
  const auto corpus = Tagged(LoadManifests(a.manifests));
  const auto v = a.base.empty() ? vocab::GraphemeVocab::Build(corpus, a.min_count)
                                : vocab::GraphemeVocab::Load(a.base).Extend(corpus, a.min_count);
  v.Save(a.output);
  fmt::print("{} tokens ({} graphemes) -> {}\n", v.size(), v.size() - kNumSpecialTokens, a.output);
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> manifests;
  std::string vocab;
  std::string languages;
  std::int64_t steps = 1000;
  std::string checkpoint = "mlasr.ckpt";
  std::int64_t checkpoint_every = 0;
  std::string resume;
  std::string metrics;
  std::vector<std::string> dev;
  std::int64_t eval_every = 0;
  bool serve = false;
  std::string host = "127.0.0.1";
  std::string static_dir;
  int step_delay_ms = 0;
  int precision = 32;
};

// Model and training keys share one file; keys outside the known prefixes
// are typos.
std::pair<model::ModelConfig, train::TrainConfig> LoadRunConfig(const std::string& path,
                                                                 int num_languages,
                                                                 int vocab_size) {
  KeyValues kv = path.empty() ? KeyValues{} : KeyValues::Load(path);
  for (const auto& [key, value] : kv.entries()) {
    if (!key.starts_with("encoder.") && !key.starts_with("decoder.") &&
        !key.starts_with("model.") && !key.starts_with("train.")) {
      throw ConfigError(fmt::format("{}: unknown config key '{}'", path, key));
    }
  }
  if (!kv.Has("encoder.num_languages")) kv.Set("encoder.num_languages", std::to_string(num_languages));
  if (!kv.Has("model.vocab_size")) kv.Set("model.vocab_size", std::to_string(vocab_size));
  auto model = model::ModelConfig::FromKeyValues(kv);
  if (model.encoder.num_languages < num_languages) {
    throw ConfigError(fmt::format("encoder.num_languages = {} but the data has {} languages",
                                  model.encoder.num_languages, num_languages));
  }
  if (model.vocab_size != vocab_size) {
    throw ConfigError(fmt::format("model.vocab_size = {} but the vocabulary has {} tokens",
                                  model.vocab_size, vocab_size));
  }
  return {std::move(model), train::TrainConfig::FromKeyValues(kv)};
}

template <typename T>
int RunTraining(train::TrainState<T> state, const TrainArgs& a,
                const std::vector<train::UtteranceRecord>& records,
                const vocab::GraphemeVocab& vocab) {
  const auto data = train::Dataset::Build(records, state.languages, vocab, &state.normalizer);
  std::optional<train::Dataset> dev;
  if (!a.dev.empty()) {
    dev = train::Dataset::Build(LoadManifests(a.dev), state.languages, vocab, &state.normalizer);
  }

  harness::SessionOptions options;
  options.max_steps = state.step + a.steps;
  options.checkpoint_path = a.checkpoint;
  options.checkpoint_every = a.checkpoint_every;
  options.metrics_path = a.metrics;
  options.eval_every = a.eval_every;
  options.step_delay = std::chrono::milliseconds(a.step_delay_ms);
  const std::int64_t start = state.step;
  harness::TrainingSession<T> session(std::move(state), data, options, dev ? &*dev : nullptr,
                                      &vocab);

  std::optional<harness::ControlServer> server;
  if (a.serve) {
    server.emplace(session, a.static_dir);
    const int port = server->Start(a.host, harness::ServePortFromEnv(kDefaultServePort));
    fmt::print(stderr, "control surface on http://{}:{}/\n", a.host, port);
  }

  std::signal(SIGINT, OnSignal);
  std::signal(SIGTERM, OnSignal);
  std::atomic<bool> done{false};
  std::jthread watcher([&] {
    while (!done) {
      if (g_interrupted) {
        session.Stop();
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });

  try {
    session.Run();
  } catch (...) {
    done = true;
    throw;
  }
  done = true;
  if (server) server->Stop();

  const auto status = session.Status();
  fmt::print("steps {}..{}", start, status.step);
  if (status.loss) fmt::print(", final loss {:.4f}", *status.loss);
  fmt::print(", checkpoint {}\n", a.checkpoint);
  return g_interrupted ? 130 : 0;
}

template <typename T>
int TrainWithPrecision(const TrainArgs& a) {
  const auto records = LoadManifests(a.manifests);
  const auto vocab = vocab::GraphemeVocab::Load(a.vocab);

  if (!a.resume.empty()) {
    auto state = harness::LoadCheckpoint<T>(a.resume);
    if (state.vocab_hash != vocab.Hash()) {
      throw UsageError(fmt::format("{} was trained with a different vocabulary than {}",
                                   a.resume, a.vocab));
    }
    if (!a.config.empty()) {
      fmt::print(stderr, "note: --config is ignored when resuming; {} carries its own\n", a.resume);
    }
    return RunTraining(std::move(state), a, records, vocab);
  }
  const auto languages = a.languages.empty() ? train::LanguageTable::FromRecords(records)
                                             : train::LanguageTable(SplitCsv(a.languages));
  auto [model, config] = LoadRunConfig(a.config, languages.size(), vocab.size());
  // Fit the normalizer once on the training records; it is stored in every
  // checkpoint so evaluation featurizes identically.
  const auto fitted = train::Dataset::Build(records, languages, vocab).normalizer();
  auto state = train::InitialState<T>(model, config, languages, vocab.Hash(), fitted);
  return RunTraining(std::move(state), a, records, vocab);
}

int Train(const TrainArgs& a) {
  int precision = a.precision;
  if (!a.resume.empty()) precision = 8 * harness::PeekCheckpointFile(a.resume).scalar_bytes;
  return precision == 64 ? TrainWithPrecision<double>(a) : TrainWithPrecision<float>(a);
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::vector<std::string> manifests;
  std::string vocab;
  int beam = 4;
  int max_len = 0;
  int threads = 1;
  std::string space_free;
  std::string details;
  bool json = false;
};

template <typename T>
int EvalWithPrecision(const EvalArgs& a) {
  const auto state = harness::LoadCheckpoint<T>(a.checkpoint);
  const auto vocab = vocab::GraphemeVocab::Load(a.vocab);
  if (state.vocab_hash != vocab.Hash()) {
    throw UsageError(fmt::format("{} was trained with a different vocabulary than {}",
                                 a.checkpoint, a.vocab));
  }
  const auto records = LoadManifests(a.manifests);

  auto params = state.params;
  Rng unused(0);
  const model::AsrModel<T> model(state.model, params, unused);
  eval::EvaluateOptions options;
  options.decode = {a.beam, a.max_len};
  options.threads = a.threads;
  if (!a.space_free.empty()) {
    const auto codes = SplitCsv(a.space_free);
    options.space_free = {codes.begin(), codes.end()};
  }
  std::vector<eval::UtteranceScore> rows;
  const auto report = eval::Evaluate(model, params, vocab, state.languages, state.normalizer,
                                     records, options, a.details.empty() ? nullptr : &rows);

  // Output starts only once everything has been scored.
  if (!a.details.empty()) {
    std::ofstream out(a.details);
    if (!out) throw IoError(fmt::format("cannot write '{}'", a.details));
    out << "id\tlanguage\terrors\twords\treference\thypothesis\n";
    for (const auto& r : rows) {
      out << fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", r.id, r.language, r.counts.errors(),
                         r.counts.reference_words, r.reference, r.hypothesis);
    }
  }
  if (a.json) {
    std::cout << report.ToJsonLines();
  } else {
    fmt::print("checkpoint {} at step {}\n", a.checkpoint, state.step);
    std::cout << report.RenderTable();
  }
  return 0;
}

int Eval(const EvalArgs& a) {
  const auto info = harness::PeekCheckpointFile(a.checkpoint);
  return info.scalar_bytes == 8 ? EvalWithPrecision<double>(a) : EvalWithPrecision<float>(a);
}

// ---- plan -----------------------------------------------------------------

struct PlanArgs {
  std::string config;
  std::string model_config;
  bool list = false;
  bool json = false;
  bool memory = false;
  double bytes_per_param = 4;
  int partitions = 0;
  double limit_gib = 16;
  std::string optimizer;
};

int Plan(const PlanArgs& a) {
  if (a.list) {
    for (const auto& e : capacity::Catalogue()) {
      const auto total = capacity::CountParams(e.config).total();
      fmt::print("{:<20} {:>15L}  {}\n", e.name, total, e.description);
    }
    return 0;
  }
  if (a.config.empty() == a.model_config.empty()) {
    throw UsageError("plan needs exactly one of --config NAME or --model-config FILE (or --list)");
  }
  model::ModelConfig config;
  std::string title;
  OptimizerKind optimizer = OptimizerKind::kAdafactor;
  int partitions = 1;
  std::optional<double> stated;
  double tolerance = 0;
  if (!a.config.empty()) {
    const auto& e = capacity::FindEntry(a.config);
    config = e.config;
    title = e.name;
    optimizer = e.optimizer;
    partitions = e.partitions;
    stated = e.stated_size;
    tolerance = e.tolerance;
  } else {
    config = model::ModelConfig::FromKeyValues(KeyValues::Load(a.model_config));
    title = std::filesystem::path(a.model_config).stem().string();
  }
  if (!a.optimizer.empty()) optimizer = ParseOptimizerKind(a.optimizer);
  if (a.partitions > 0) partitions = a.partitions;

  const auto report = capacity::CountParams(config);
  std::optional<capacity::MemoryVerdict> verdict;
  if (a.memory) {
    verdict = capacity::CheckMemory(report, optimizer, a.bytes_per_param, partitions,
                                    a.limit_gib * double(1ull << 30));
  }
  if (a.json) {
    std::cout << capacity::ReportJsonLines(title, report, verdict);
    return 0;
  }
  std::cout << capacity::RenderReport(title, report);
  if (stated) {
    const double rel = double(report.total()) / *stated - 1.0;
    fmt::print("stated size {:.3g}: {:+.1f}% ({} the {:.0f}% tolerance)\n", *stated, 100 * rel,
               std::abs(rel) <= tolerance ? "within" : "outside", 100 * tolerance);
  }
  if (verdict) {
    fmt::print(
        "memory: {} optimizer x{:.3f}, {:.2f} GiB total, {:.3f} GiB per partition over {} "
        "partitions, limit {:.1f} GiB, margin {:.2f} -> {}\n",
        ToString(optimizer), verdict->replication, verdict->total_bytes / double(1ull << 30),
        verdict->per_partition_bytes / double(1ull << 30), partitions,
        verdict->limit_bytes / double(1ull << 30), verdict->margin,
        verdict->feasible ? "fits" : "does not fit");
  }
  return 0;
}

// ---- extend ---------------------------------------------------------------

struct ExtendArgs {
  std::string checkpoint;
  std::string old_vocab;
  std::string new_vocab;
  std::string add;
  int language_slots = 0;
  std::string families;
  bool keep_slots = false;
  std::string output;
};

template <typename T>
int ExtendWithPrecision(const ExtendArgs& a) {
  const auto state = harness::LoadCheckpoint<T>(a.checkpoint);
  const auto old_vocab = vocab::GraphemeVocab::Load(a.old_vocab);
  const auto new_vocab = vocab::GraphemeVocab::Load(a.new_vocab);
  auto codes = state.languages.codes();
  for (const auto& c : SplitCsv(a.add)) {
    if (state.languages.Contains(c)) throw UsageError(fmt::format("'{}' is already trained", c));
    codes.push_back(c);
  }
  train::ExtensionOptions options;
  options.language_slots = a.language_slots;
  options.families = SplitCsvInts(a.families);
  options.reset_slots = !a.keep_slots;
  const auto extended = train::ExtendLanguages(state, train::LanguageTable(codes), old_vocab,
                                               new_vocab, options);
  harness::SaveCheckpoint(a.output, extended);
  fmt::print("{} -> {} languages, vocabulary {} -> {}, language slots {}, optimizer slots {}; "
             "wrote {}\n",
             state.languages.size(), extended.languages.size(), old_vocab.size(),
             new_vocab.size(), extended.model.encoder.num_languages,
             options.reset_slots ? "reset" : "kept", a.output);
  return 0;
}

int Extend(const ExtendArgs& a) {
  const auto info = harness::PeekCheckpointFile(a.checkpoint);
  return info.scalar_bytes == 8 ? ExtendWithPrecision<double>(a) : ExtendWithPrecision<float>(a);
}

// ---- serve ----------------------------------------------------------------

struct ServeArgs {
  std::string checkpoint;
  std::string host = "127.0.0.1";
  std::string static_dir;
};

int Serve(const ServeArgs& a) {
  harness::StatusSnapshot snapshot;
  train::LanguageTable languages;
  std::vector<train::AuditEntry> audit;
  if (!a.checkpoint.empty()) {
    const auto info = harness::PeekCheckpointFile(a.checkpoint);
    auto describe = [&](const auto& s) {
      snapshot.step = s.step;
      snapshot.schedule = s.schedule;
      for (int i = 0; i < s.languages.size(); ++i) {
        snapshot.languages.push_back({s.languages.code(i), s.schedule.weights.at(std::size_t(i)), {}, {}});
      }
      languages = s.languages;
      audit = s.audit;
    };
    if (info.scalar_bytes == 8) {
      describe(harness::LoadCheckpoint<double>(a.checkpoint));
    } else {
      describe(harness::LoadCheckpoint<float>(a.checkpoint));
    }
    snapshot.message = fmt::format("checkpoint {} (no training run attached)", a.checkpoint);
  } else {
    snapshot.message = "no training run attached";
  }
  harness::IdleControl idle(snapshot, languages, audit);
  harness::ControlServer server(idle, a.static_dir);
  const int port = server.Start(a.host, harness::ServePortFromEnv(kDefaultServePort));
  fmt::print(stderr, "serving idle status on http://{}:{}/ (Ctrl-C to stop)\n", a.host, port);
  std::signal(SIGINT, OnSignal);
  std::signal(SIGTERM, OnSignal);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.Stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mlasr: multilingual grapheme ASR training, evaluation and capacity planning"};
  app.require_subcommand(1, 1);

  BuildVocabArgs bv;
  auto* build_vocab = app.add_subcommand("build-vocab", "build a grapheme vocabulary from manifests");
  build_vocab->add_option("-m,--manifest", bv.manifests, "JSON-lines manifest (repeatable)")
      ->required();
  build_vocab->add_option("--min-count", bv.min_count, "minimum grapheme count")
      ->check(CLI::PositiveNumber);
  build_vocab->add_option("--extend", bv.base, "existing vocabulary to extend (ids kept)")
      ->check(CLI::ExistingFile);
  build_vocab->add_option("-o,--output", bv.output, "output vocabulary file")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "train a model, optionally under live HTTP control");
  train->add_option("-c,--config", tr.config, "key = value file with encoder./decoder./model./train. keys")
      ->check(CLI::ExistingFile);
  train->add_option("-m,--manifest", tr.manifests, "training manifest (repeatable)")->required();
  train->add_option("--vocab", tr.vocab, "vocabulary file")->required()->check(CLI::ExistingFile);
  train->add_option("--languages", tr.languages,
                    "comma-separated language order (default: order of first appearance)");
  train->add_option("--steps", tr.steps, "steps to run in this invocation; 0 only writes the checkpoint")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--checkpoint", tr.checkpoint, "checkpoint written at the end and on request")
      ->capture_default_str();
  train->add_option("--checkpoint-every", tr.checkpoint_every, "also checkpoint every N steps")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--resume", tr.resume, "continue from this checkpoint")->check(CLI::ExistingFile);
  train->add_option("--metrics", tr.metrics, "append one JSON line per step to this file");
  train->add_option("--dev", tr.dev, "dev manifest for periodic WER (repeatable)");
  train->add_option("--eval-every", tr.eval_every, "dev WER every N steps")
      ->check(CLI::NonNegativeNumber);
  train->add_flag("--serve", tr.serve, "serve the control surface (port from MLASR_SERVE_PORT, default 8080)");
  train->add_option("--host", tr.host, "bind address for --serve")->capture_default_str();
  train->add_option("--static-dir", tr.static_dir, "directory of dashboard assets to serve")
      ->check(CLI::ExistingDirectory);
  train->add_option("--step-delay-ms", tr.step_delay_ms, "sleep after each step")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--precision", tr.precision, "32 or 64 bit parameters")
      ->check(CLI::IsMember({32, 64}));

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "decode a manifest and report per-language WER");
  eval->add_option("--checkpoint", ev.checkpoint, "trained checkpoint")->required();
  eval->add_option("-m,--manifest", ev.manifests, "evaluation manifest (repeatable)")->required();
  eval->add_option("--vocab", ev.vocab, "vocabulary the checkpoint was trained with")->required();
  eval->add_option("--beam", ev.beam, "beam width (1 is greedy)")->check(CLI::PositiveNumber);
  eval->add_option("--max-len", ev.max_len, "maximum output length (0: from encoder length)")
      ->check(CLI::NonNegativeNumber);
  eval->add_option("--threads", ev.threads, "decoding threads")->check(CLI::PositiveNumber);
  eval->add_option("--space-free", ev.space_free,
                   "comma-separated languages scored per grapheme (default: zh, ja, th and variants)");
  eval->add_option("--details", ev.details, "write per-utterance rows (TSV) here");
  eval->add_flag("--json", ev.json, "JSON lines instead of the table");

  PlanArgs pl;
  auto* plan = app.add_subcommand("plan", "parameter counts and memory feasibility");
  plan->add_option("--config", pl.config, "catalogue entry name (see --list)");
  plan->add_option("--model-config", pl.model_config, "key = value model config file")
      ->check(CLI::ExistingFile);
  plan->add_flag("--list", pl.list, "list catalogue entries with totals");
  plan->add_flag("--json", pl.json, "JSON lines instead of the table");
  plan->add_flag("--memory", pl.memory, "check per-partition memory");
  plan->add_option("--bytes-per-param", pl.bytes_per_param, "bytes per stored scalar")
      ->check(CLI::PositiveNumber);
  plan->add_option("--partitions", pl.partitions, "model partitions (default: the entry's)")
      ->check(CLI::NonNegativeNumber);
  plan->add_option("--limit-gib", pl.limit_gib, "per-partition memory limit in GiB")
      ->check(CLI::PositiveNumber);
  plan->add_option("--optimizer", pl.optimizer, "adam or adafactor (default: the entry's)");

  ExtendArgs ex;
  auto* extend = app.add_subcommand("extend", "warm-start a checkpoint onto more languages and graphemes");
  extend->add_option("--checkpoint", ex.checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  extend->add_option("--old-vocab", ex.old_vocab, "vocabulary of the checkpoint")->required()->check(CLI::ExistingFile);
  extend->add_option("--new-vocab", ex.new_vocab, "extended vocabulary (build-vocab --extend)")
      ->required()->check(CLI::ExistingFile);
  extend->add_option("--add", ex.add, "comma-separated new language codes, appended in order")->required();
  extend->add_option("--language-slots", ex.language_slots,
                     "width of the language one-hot / adapter table (0: language count)")
      ->check(CLI::NonNegativeNumber);
  extend->add_option("--families", ex.families, "comma-separated family id per language (per-family routing)");
  extend->add_flag("--keep-slots", ex.keep_slots, "carry optimizer slots over instead of resetting them");
  extend->add_option("-o,--output", ex.output, "extended checkpoint")->required();

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "serve the control surface without a training run");
  serve->add_option("--checkpoint", sv.checkpoint, "describe this checkpoint in /status")
      ->check(CLI::ExistingFile);
  serve->add_option("--host", sv.host, "bind address")->capture_default_str();
  serve->add_option("--static-dir", sv.static_dir, "directory of dashboard assets")
      ->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "mlasr: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 2;
  }

  try {
    if (*build_vocab) return BuildVocab(bv);
    if (*train) return Train(tr);
    if (*eval) return Eval(ev);
    if (*plan) return Plan(pl);
    if (*extend) return Extend(ex);
    if (*serve) return Serve(sv);
  } catch (const mlasr::Error& e) {
    std::cerr << "mlasr: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
