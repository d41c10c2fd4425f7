#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "doctest.h"
#include "mlasr/common/binary_io.h"
#include "mlasr/common/error.h"
#include "mlasr/frontend/audio_io.h"
#include "mlasr/frontend/features.h"
#include "unit/test_util.h"

using namespace mlasr;
using namespace mlasr::frontend;
using mlasr::testing::RandomTensor;

namespace {

std::vector<float> Tone(double hz, int sample_rate, std::size_t n, double amplitude = 0.5) {
  std::vector<float> pcm(n);
  for (std::size_t i = 0; i < n; ++i) {
    pcm[i] = static_cast<float>(amplitude * std::sin(2 * std::numbers::pi * hz * i / sample_rate));
  }
  return pcm;
}

FeatureFrames Frames(std::size_t steps, int dim, int rate, Rng& rng) {
  return FeatureFrames{RandomTensor<float>({steps, std::size_t(dim)}, rng), rate};
}

std::filesystem::path TempPath(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mlasr_frontend_" + name);
}

}  // namespace

TEST_CASE("one second at 16 kHz gives 97 frames of 80 bins") {
  const auto out = ComputeLogMel(Tone(440, 16000, 16000), 16000);
  CHECK(out.num_frames() == 97u);
  CHECK(out.dim() == 80);
  CHECK(out.frame_rate_ms == 10);
  CHECK(ComputeLogMel(std::vector<float>(512), 16000).num_frames() == 1u);
}

TEST_CASE("silence maps to the log floor everywhere") {
  const auto out = ComputeLogMel(std::vector<float>(4000), 16000);
  const float expected = static_cast<float>(std::log(LogMelOptions{}.floor));
  for (float v : out.frames.values()) CHECK(v == expected);
}

TEST_CASE("a 1 kHz tone peaks in the filter whose triangle covers 1 kHz most") {
  // Independent construction: HTK Mel scale, 81 equal Mel intervals over
  // [125, 8000] Hz, triangle weight evaluated at exactly 1000 Hz.
  const auto mel = [](double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); };
  const double lo = mel(125.0), hi = mel(8000.0), step = (hi - lo) / 81.0, m = mel(1000.0);
  int oracle = -1;
  double best = -1;
  for (int b = 0; b < 80; ++b) {
    const double center = lo + (b + 1) * step;
    const double w = std::max(0.0, 1.0 - std::abs(m - center) / step);
    if (w > best) {
      best = w;
      oracle = b;
    }
  }
  const auto out = ComputeLogMel(Tone(1000, 16000, 8000), 16000);
  for (std::size_t t = 0; t < out.num_frames(); ++t) {
    const auto row = out.frames.row(t);
    const int argmax = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    CHECK(argmax == oracle);
  }
}

TEST_CASE("log-Mel output is finite for random audio") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> pcm(600 + UniformIndex(rng, 3000));
    const double scale = std::pow(10.0, -6.0 + 6.0 * UniformUnit(rng));
    for (float& s : pcm) s = static_cast<float>(scale * (2 * UniformUnit(rng) - 1));
    CHECK(ComputeLogMel(pcm, 16000).frames.AllFinite());
  }
}

TEST_CASE("log-Mel input validation") {
  CHECK_THROWS_AS(ComputeLogMel(std::vector<float>(100), 16000), UsageError);
  CHECK_THROWS_AS(ComputeLogMel(std::vector<float>(4000), 4000), UsageError);
}

TEST_CASE("stacking shapes and tail padding") {
  Rng rng(2);
  CHECK(StackAndSubsample(Frames(9, 80, 10, rng)).frames.shape() == nn::Shape{3, 240});
  const auto ten = Frames(10, 80, 10, rng);
  const auto stacked = StackAndSubsample(ten);
  REQUIRE(stacked.num_frames() == 4u);
  CHECK(stacked.frame_rate_ms == 30);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t c = 0; c < 80; ++c) CHECK(stacked.frames(3, j * 80 + c) == ten.frames(9, c));
  }
  const auto one = Frames(1, 80, 10, rng);
  const auto tripled = StackAndSubsample(one);
  REQUIRE(tripled.num_frames() == 1u);
  for (std::size_t c = 0; c < 240; ++c) CHECK(tripled.frames(0, c) == one.frames(0, c % 80));
  CHECK_THROWS_AS(StackAndSubsample(Frames(3, 40, 10, rng)), ShapeError);
  CHECK_THROWS_AS(StackAndSubsample(Frames(3, 80, 30, rng)), ShapeError);
}

TEST_CASE("unstack inverts stacking on multiples of three") {
  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    const auto input = Frames(3 * (1 + UniformIndex(rng, 20)), 80, 10, rng);
    const auto back = Unstack(StackAndSubsample(input));
    CHECK(back.frames == input.frames);
    CHECK(back.frame_rate_ms == 10);
  }
}

TEST_CASE("spec augment identity policy and determinism") {
  Rng rng(4);
  const auto input = Frames(40, 80, 10, rng);
  Rng identity_rng(9);
  CHECK(SpecAugment(input, SpecAugmentPolicy::Identity(), identity_rng).frames == input.frames);
  Rng r1(9), r2(9);
  const auto a = SpecAugment(input, {}, r1);
  CHECK(SpecAugment(input, {}, r2).frames == a.frames);
  CHECK_FALSE(a.frames == input.frames);
}

TEST_CASE("spec augment masks form full bands within the policy bounds") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t steps = 1 + UniformIndex(rng, 120);
    auto input = Frames(steps, 80, 10, rng);
    for (float& v : input.frames.values()) v = v == 0.0f ? 1.0f : v;  // mask value never occurs
    const SpecAugmentPolicy policy;
    const auto out = SpecAugment(input, policy, rng);
    REQUIRE(out.frames.shape() == input.frames.shape());
    std::set<std::size_t> full_cols, full_rows;
    for (std::size_t c = 0; c < 80; ++c) {
      bool all = true;
      for (std::size_t t = 0; t < steps && all; ++t) all = out.frames(t, c) == policy.mask_value;
      if (all) full_cols.insert(c);
    }
    for (std::size_t t = 0; t < steps; ++t) {
      bool all = true;
      for (std::size_t c = 0; c < 80 && all; ++c) all = out.frames(t, c) == policy.mask_value;
      if (all) full_rows.insert(t);
    }
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t c = 0; c < 80; ++c) {
        if (out.frames(t, c) != input.frames(t, c)) {
          CHECK((full_cols.contains(c) || full_rows.contains(t)));
        }
      }
    }
    // Columns masked only through full time bands do not count as frequency masks.
    if (full_rows.size() < steps) CHECK(full_cols.size() <= 54u);
    if (full_cols.size() < 80) CHECK(full_rows.size() <= 100u);
  }
}

TEST_CASE("wav and feature files round-trip") {
  const auto wav = TempPath("a.wav");
  WavAudio audio{Tone(300, 16000, 1000), 16000};
  WriteWav(wav.string(), audio);
  const WavAudio back = ReadWav(wav.string());
  CHECK(back.sample_rate == 16000);
  REQUIRE(back.samples.size() == audio.samples.size());
  for (std::size_t i = 0; i < audio.samples.size(); ++i) {
    CHECK(std::abs(back.samples[i] - audio.samples[i]) <= 1.0f / 32768.0f);
  }

  Rng rng(6);
  const auto feat = TempPath("a.feat");
  const auto frames = Frames(7, 240, 30, rng);
  WriteFeatureFile(feat.string(), frames);
  const auto loaded = ReadFeatureFile(feat.string());
  CHECK(loaded.frames == frames.frames);
  CHECK(loaded.frame_rate_ms == 30);
  CHECK(std::filesystem::file_size(feat) == 16u + 7 * 240 * 4);

  WriteFileBytes(feat.string(), "JUNKxxxxxxxxxxxx");
  CHECK_THROWS_AS(ReadFeatureFile(feat.string()), IoError);
  CHECK_THROWS_AS(ReadWav((TempPath("missing.wav")).string()), IoError);
}

TEST_CASE("feature normalizer standardizes each column") {
  Rng rng(7);
  std::vector<nn::Tensor<float>> utts;
  for (int i = 0; i < 5; ++i) {
    auto t = RandomTensor<float>({30, 4}, rng, 3.0);
    for (std::size_t r = 0; r < 30; ++r) t(r, 2) += 10.0f;
    utts.push_back(t);
  }
  const auto norm = FeatureNormalizer::Fit(utts);
  CHECK(std::abs(norm.mean()[2] - 10.0f) < 1.5f);
  double sum = 0, sum_sq = 0;
  for (auto t : utts) {
    norm.Apply(t);
    for (std::size_t r = 0; r < 30; ++r) {
      sum += t(r, 2);
      sum_sq += t(r, 2) * t(r, 2);
    }
  }
  CHECK(std::abs(sum / 150) < 1e-5);
  CHECK(std::abs(sum_sq / 150 - 1.0) < 1e-4);
}
