#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "mlasr/common/binary_io.h"
#include "mlasr/common/error.h"
#include "mlasr/common/hash.h"
#include "mlasr/harness/checkpoint.h"
#include "mlasr/harness/server.h"
#include "mlasr/harness/session.h"
#include "mlasr/train/synthetic.h"

using namespace mlasr;
using namespace mlasr::harness;
using nlohmann::json;

namespace {

struct Fixture {
  std::vector<train::SyntheticUtterance> utterances;
  vocab::GraphemeVocab vocab;
  train::LanguageTable languages{{"en", "ru", "zh"}};
  train::Dataset data;
  model::ModelConfig model;
  train::TrainConfig config;

  Fixture() {
    train::SyntheticOptions o;
    o.utterances_per_language = 10;
    o.max_words = 2;
    utterances = train::GenerateSynthetic(o);
    vocab = vocab::GraphemeVocab::Build(train::Transcripts(utterances), 1);
    data = train::SyntheticDataset(utterances, languages, vocab);
    model.encoder.num_layers = 5;
    model.encoder.model_dim = 8;
    model.encoder.attention_heads = 2;
    model.encoder.conv_kernel = 3;
    model.encoder.conditioning = model::Conditioning::kPerLanguageAdapter;
    model.encoder.num_languages = 3;
    model.decoder.kind = model::DecoderKind::kLas;
    model.decoder.num_layers = 1;
    model.decoder.model_dim = 8;
    model.decoder.hidden_dim = 8;
    model.vocab_size = vocab.size();
    config.batch_size = 3;
    config.schedule = {5e-3, 5};
    config.optimizer = train::OptimizerConfig::Adafactor();
    config.augment = {1, 30, 1, 4, 0.0f};
  }

  template <typename T>
  train::TrainState<T> Fresh() const {
    return train::InitialState<T>(model, config, languages, vocab.Hash(), {});
  }
};

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() /
          fmt::format("mlasr_harness_{}_{}", ::getpid(), name))
      .string();
}

// Rewrites the version field and re-seals the trailer, as a future writer would.
std::string WithVersion(std::string bytes, std::uint32_t version) {
  for (int i = 0; i < 4; ++i) bytes[4 + i] = static_cast<char>((version >> (8 * i)) & 0xff);
  bytes.resize(bytes.size() - 8);
  BinaryWriter w;
  w.U64(HashText(bytes));
  return bytes + w.buffer();
}

}  // namespace

TEST_CASE_TEMPLATE("checkpoint round trip is byte-identical", T, float, double) {
  Fixture f;
  train::Trainer<T> trainer(f.Fresh<T>(), f.data);
  for (int i = 0; i < 3; ++i) trainer.Step();
  trainer.SubmitMixing(train::MixingSchedule{{1, 2, 3}, 0}, "test");
  trainer.Step();
  const auto state = std::move(trainer).TakeState();
  REQUIRE(state.history.size() == 1);

  const std::string bytes = SerializeCheckpoint(state);
  const auto loaded = ParseCheckpoint<T>(bytes);
  CHECK(SerializeCheckpoint(loaded) == bytes);
  CHECK(loaded.params == state.params);
  CHECK(loaded.optimizer == state.optimizer);
  CHECK(loaded.schedule == state.schedule);
  CHECK(loaded.audit == state.audit);
  CHECK(loaded.sampler_rng == state.sampler_rng);
  CHECK(loaded.train == state.train);
  CHECK(loaded.model == state.model);

  const auto info = PeekCheckpoint(bytes);
  CHECK(info.version == kCheckpointVersion);
  CHECK(info.scalar_bytes == int(sizeof(T)));
  CHECK(info.step == 4);

  const auto path = TempPath(fmt::format("rt{}.ck", sizeof(T)));
  SaveCheckpoint(path, state);
  CHECK(ReadFileBytes(path) == bytes);
  CHECK(SerializeCheckpoint(LoadCheckpoint<T>(path)) == bytes);
  std::filesystem::remove(path);
}

TEST_CASE("damaged or foreign checkpoints fail loudly") {
  Fixture f;
  const auto bytes = SerializeCheckpoint(f.Fresh<double>());
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x20;
  CHECK_THROWS_AS(ParseCheckpoint<double>(flipped), IoError);
  CHECK_THROWS_AS(ParseCheckpoint<double>(bytes.substr(0, bytes.size() - 3)), IoError);
  CHECK_THROWS_AS(ParseCheckpoint<double>("MLCK"), IoError);
  CHECK_THROWS_AS(ParseCheckpoint<double>("not a checkpoint at all"), IoError);
  CHECK_THROWS_AS(ParseCheckpoint<double>(WithVersion(bytes, kCheckpointVersion + 1)), IoError);
  CHECK_NOTHROW(ParseCheckpoint<double>(WithVersion(bytes, kCheckpointVersion)));
  CHECK_THROWS_AS(ParseCheckpoint<float>(bytes), UsageError);
  CHECK_THROWS_AS(LoadCheckpoint<double>(TempPath("missing.ck")), IoError);
}

TEST_CASE("resuming from a checkpoint reproduces the 64-bit trajectory") {
  Fixture f;
  auto straight = [&] {
    train::Trainer<double> t(f.Fresh<double>(), f.data);
    std::vector<double> losses;
    for (int i = 0; i < 16; ++i) losses.push_back(t.Step().loss);
    return std::pair{losses, SerializeCheckpoint(std::move(t).TakeState())};
  }();
  std::vector<double> resumed;
  std::string bytes;
  {
    train::Trainer<double> t(f.Fresh<double>(), f.data);
    for (int i = 0; i < 7; ++i) resumed.push_back(t.Step().loss);
    bytes = SerializeCheckpoint(std::move(t).TakeState());
  }
  train::Trainer<double> t(ParseCheckpoint<double>(bytes), f.data);
  for (int i = 7; i < 16; ++i) resumed.push_back(t.Step().loss);
  CHECK(resumed == straight.first);
  CHECK(SerializeCheckpoint(std::move(t).TakeState()) == straight.second);
}

TEST_CASE("mixing request bodies") {
  const train::LanguageTable langs({"en", "ru", "zh"});
  CHECK(ParseMixingRequest(R"({"weights": [1, 1, 2]})", langs).weights ==
        std::vector<double>{1, 1, 2});
  CHECK(ParseMixingRequest(R"({"weights": {"zh": 2, "en": 1, "ru": 1}})", langs).weights ==
        std::vector<double>{1, 1, 2});
  const auto boost = ParseMixingRequest(R"({"boost": {"language": "ru", "weight": 0.4}})", langs);
  CHECK(boost.weights[1] == 0.4);
  CHECK(boost.weights[0] == doctest::Approx(0.3));
  for (const char* bad : {R"({"weights": [1, -1, 2]})", R"({"weights": [0, 0, 0]})",
                          R"({"weights": [1, 2]})", R"({"weights": {"en": 1, "ru": 1}})",
                          R"({"weights": {"en": 1, "ru": 1, "xx": 1}})", R"({"weights": "x"})",
                          R"({"boost": {"language": "fr", "weight": 0.4}})", "[1,2,3]", "{",
                          R"({"weights": [1, "a", 2]})"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(ParseMixingRequest(bad, langs), UsageError);
  }
}

TEST_CASE("serve port comes from the environment") {
  ::unsetenv("MLASR_SERVE_PORT");
  CHECK(ServePortFromEnv(8080) == 8080);
  ::setenv("MLASR_SERVE_PORT", "9123", 1);
  CHECK(ServePortFromEnv(8080) == 9123);
  ::setenv("MLASR_SERVE_PORT", "http", 1);
  CHECK_THROWS_AS(ServePortFromEnv(8080), ConfigError);
  ::unsetenv("MLASR_SERVE_PORT");
}

TEST_CASE("idle server") {
  IdleControl idle({}, train::LanguageTable({"en"}));
  ControlServer server(idle);
  const int port = server.Start("127.0.0.1", 0);
  httplib::Client client("127.0.0.1", port);
  const auto status = client.Get("/status");
  REQUIRE(status);
  CHECK(json::parse(status->body)["state"] == "idle");
  const auto mixing = client.Post("/mixing", R"({"weights": [1]})", "application/json");
  REQUIRE(mixing);
  CHECK(mixing->status == 400);
  CHECK(client.Post("/pause", "", "application/json")->status == 409);
  server.Stop();
}

TEST_CASE("live control of a training session") {
  Fixture f;
  SessionOptions options;
  options.max_steps = 1000000;
  options.checkpoint_path = TempPath("live.ck");
  options.metrics_path = TempPath("live.metrics");
  options.step_delay = std::chrono::milliseconds(2);
  std::filesystem::remove(options.metrics_path);
  TrainingSession<float> session(f.Fresh<float>(), f.data, options);
  ControlServer server(session);
  const int port = server.Start("127.0.0.1", 0);
  httplib::Client client("127.0.0.1", port);

  CHECK(json::parse(client.Get("/status")->body)["state"] == "idle");
  std::thread runner([&] { session.Run(); });
  auto status = [&] { return json::parse(client.Get("/status")->body); };
  while (status()["step"].get<int>() < 3) std::this_thread::sleep_for(std::chrono::milliseconds(5));

  const auto s = status();
  CHECK(s["state"] == "running");
  CHECK(s["examples_per_second"].get<double>() > 0);
  CHECK(s["languages"].size() == 3);

  const auto bad = client.Post("/mixing", R"({"weights": [1, -2, 1]})", "application/json");
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body)["accepted"] == false);

  const auto ok = client.Post("/mixing", R"({"boost": {"language": "zh", "weight": 1.0}})",
                              "application/json");
  REQUIRE(ok->status == 200);
  const auto ack = json::parse(ok->body);
  const std::int64_t effective = ack["effective_step"];
  while (status()["step"].get<std::int64_t>() < effective + 2) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  CHECK(status()["mixing"]["effective_step"] == effective);
  bool found = false;
  std::istringstream audit(client.Get("/audit")->body);
  for (std::string line; std::getline(audit, line);) {
    const auto a = json::parse(line);
    if (a["source"] == "http") {
      CHECK(a["effective_step"] == effective);
      found = true;
    }
  }
  CHECK(found);
  for (const auto& r : session.results()) {
    if (r.step < effective) continue;
    for (auto index : r.batch) CHECK(f.data[index].language == 2);
  }

  CHECK(client.Post("/pause", "", "application/json")->status == 200);
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  const auto paused = status();
  CHECK(paused["state"] == "paused");
  std::this_thread::sleep_for(std::chrono::milliseconds(30));
  CHECK(status()["step"] == paused["step"]);
  const auto ck = client.Post("/checkpoint", "", "application/json");
  REQUIRE(ck->status == 200);
  CHECK(json::parse(ck->body)["step"] == paused["step"]);
  CHECK(PeekCheckpointFile(options.checkpoint_path).step == paused["step"].get<std::int64_t>());
  CHECK(client.Post("/resume", "", "application/json")->status == 200);

  const auto history = client.Get("/metrics/history?since=2")->body;
  std::istringstream lines(history);
  std::string first;
  std::getline(lines, first);
  CHECK(json::parse(first)["step"] == 3);
  CHECK(client.Get("/metrics/history?since=abc")->status == 400);

  session.Stop();
  runner.join();
  server.Stop();
  CHECK(session.Status().state == "finished");
  std::ifstream log(options.metrics_path);
  std::size_t logged = 0;
  for (std::string line; std::getline(log, line);) ++logged;
  CHECK(logged == session.results().size());
  std::filesystem::remove(options.checkpoint_path);
  std::filesystem::remove(options.metrics_path);
}
