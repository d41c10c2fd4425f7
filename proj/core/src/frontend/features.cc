#include "mlasr/frontend/features.h"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include <fmt/format.h>

#include "mlasr/common/error.h"

namespace mlasr::frontend {
namespace {

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

// FFTW's planner is not reentrant; execution on distinct plans is.
std::mutex& PlannerMutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    input_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    output_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    if (input_ == nullptr || output_ == nullptr) {
      Release();
      throw std::bad_alloc();
    }
    std::lock_guard lock(PlannerMutex());
    plan_ = fftw_plan_dft_r2c_1d(n, input_, output_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() { Release(); }

  std::span<double> input() { return {input_, static_cast<std::size_t>(n_)}; }

  // |X[k]| for k = 0 .. n/2 of the current input.
  void Magnitude(std::span<double> out) {
    fftw_execute(plan_);
    for (int k = 0; k <= n_ / 2; ++k) out[k] = std::hypot(output_[k][0], output_[k][1]);
  }

 private:
  void Release() {
    if (plan_ != nullptr) {
      std::lock_guard lock(PlannerMutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(input_);
    fftw_free(output_);
  }

  int n_;
  double* input_ = nullptr;
  fftw_complex* output_ = nullptr;
  fftw_plan plan_ = nullptr;
};

void RequireLayout(const FeatureFrames& f, int dim, int rate_ms, const char* op) {
  if (f.num_frames() > 0 && f.dim() != dim) {
    throw ShapeError(fmt::format("{}: expected {}-dim frames, got {}", op, dim, f.dim()));
  }
  if (f.frame_rate_ms != rate_ms) {
    throw ShapeError(fmt::format("{}: expected {} ms frames, got {} ms", op, rate_ms,
                                 f.frame_rate_ms));
  }
}

}  // namespace

std::vector<std::vector<double>> MelFilterbank(int num_bins, int fft_size, int sample_rate,
                                               double low_hz, double high_hz) {
  const double nyquist = sample_rate / 2.0;
  if (high_hz <= 0.0) high_hz = nyquist;
  if (num_bins < 1 || low_hz < 0.0 || high_hz > nyquist || low_hz >= high_hz) {
    throw ConfigError(fmt::format("invalid Mel filterbank: {} bins over [{}, {}] Hz", num_bins,
                                  low_hz, high_hz));
  }
  const double mel_low = HzToMel(low_hz), mel_high = HzToMel(high_hz);
  const double spacing = (mel_high - mel_low) / (num_bins + 1);
  const int num_fft_bins = fft_size / 2 + 1;
  std::vector<std::vector<double>> bank(num_bins, std::vector<double>(num_fft_bins, 0.0));
  for (int b = 0; b < num_bins; ++b) {
    const double left = mel_low + b * spacing;
    const double center = left + spacing;
    const double right = center + spacing;
    for (int k = 0; k < num_fft_bins; ++k) {
      const double mel = HzToMel(static_cast<double>(k) * sample_rate / fft_size);
      if (mel <= left || mel >= right) continue;
      bank[b][k] = mel <= center ? (mel - left) / spacing : (right - mel) / spacing;
    }
  }
  return bank;
}

FeatureFrames ComputeLogMel(std::span<const float> pcm, int sample_rate,
                            const LogMelOptions& options) {
  if (sample_rate < 8000) {
    throw UsageError(fmt::format("unsupported sample rate {} Hz (need >= 8000)", sample_rate));
  }
  const auto window = static_cast<std::size_t>(std::lround(options.window_ms * sample_rate / 1000));
  const auto hop = static_cast<std::size_t>(std::lround(options.hop_ms * sample_rate / 1000));
  if (pcm.size() < window) {
    throw UsageError(fmt::format("audio too short: {} samples, one {} ms window needs {}",
                                 pcm.size(), options.window_ms, window));
  }
  int fft_size = 1;
  while (static_cast<std::size_t>(fft_size) < window) fft_size *= 2;

  const auto bank = MelFilterbank(options.num_bins, fft_size, sample_rate, options.low_hz,
                                  options.high_hz);
  std::vector<double> hann(window);
  for (std::size_t n = 0; n < window; ++n) {
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / window);
  }
  const std::size_t frames = 1 + (pcm.size() - window) / hop;
  FeatureFrames out;
  out.frame_rate_ms = static_cast<int>(std::lround(options.hop_ms));
  out.frames = nn::Tensor<float>({frames, static_cast<std::size_t>(options.num_bins)});

  RealFft fft(fft_size);
  std::vector<double> magnitude(fft_size / 2 + 1);
  const float log_floor = static_cast<float>(std::log(options.floor));
  for (std::size_t t = 0; t < frames; ++t) {
    auto in = fft.input();
    std::fill(in.begin(), in.end(), 0.0);
    for (std::size_t n = 0; n < window; ++n) in[n] = pcm[t * hop + n] * hann[n];
    fft.Magnitude(magnitude);
    for (int b = 0; b < options.num_bins; ++b) {
      double energy = 0.0;
      for (std::size_t k = 0; k < magnitude.size(); ++k) energy += bank[b][k] * magnitude[k];
      out.frames(t, b) =
          energy > options.floor ? static_cast<float>(std::log(energy)) : log_floor;
    }
  }
  return out;
}

FeatureFrames StackAndSubsample(const FeatureFrames& input) {
  RequireLayout(input, kMelBins, 10, "stack_and_subsample");
  const std::size_t t = input.num_frames();
  const std::size_t out_t = (t + kStackFactor - 1) / kStackFactor;
  FeatureFrames out;
  out.frame_rate_ms = 10 * kStackFactor;
  out.frames = nn::Tensor<float>({out_t, static_cast<std::size_t>(kStackedDim)});
  for (std::size_t i = 0; i < out_t; ++i) {
    for (std::size_t j = 0; j < kStackFactor; ++j) {
      const std::size_t src = std::min(i * kStackFactor + j, t - 1);
      std::copy_n(input.frames.row(src).data(), kMelBins,
                  out.frames.row(i).data() + j * kMelBins);
    }
  }
  return out;
}

FeatureFrames Unstack(const FeatureFrames& stacked) {
  RequireLayout(stacked, kStackedDim, 10 * kStackFactor, "unstack");
  FeatureFrames out;
  out.frames = stacked.frames;
  out.frames.Reshape({stacked.num_frames() * kStackFactor, static_cast<std::size_t>(kMelBins)});
  out.frame_rate_ms = 10;
  return out;
}

void SpecAugmentPolicy::Validate() const {
  if (num_freq_masks < 0 || max_freq_len < 0 || num_time_masks < 0 || max_time_len < 0) {
    throw ConfigError("SpecAugment counts and lengths must be non-negative");
  }
}

FeatureFrames SpecAugment(const FeatureFrames& input, const SpecAugmentPolicy& policy, Rng& rng) {
  policy.Validate();
  FeatureFrames out = input;
  const std::int64_t steps = static_cast<std::int64_t>(input.num_frames());
  const std::int64_t dim = input.dim();
  if (steps == 0 || dim == 0) return out;
  auto& f = out.frames;
  for (int m = 0; m < policy.num_freq_masks; ++m) {
    const std::int64_t len = std::min<std::int64_t>(UniformInclusive(rng, 0, policy.max_freq_len), dim);
    const std::int64_t start = UniformInclusive(rng, 0, dim - len);
    for (std::int64_t t = 0; t < steps; ++t) {
      for (std::int64_t c = start; c < start + len; ++c) f(t, c) = policy.mask_value;
    }
  }
  for (int m = 0; m < policy.num_time_masks; ++m) {
    const std::int64_t len = std::min<std::int64_t>(UniformInclusive(rng, 0, policy.max_time_len), steps);
    const std::int64_t start = UniformInclusive(rng, 0, steps - len);
    for (std::int64_t t = start; t < start + len; ++t) {
      std::fill(f.row(t).begin(), f.row(t).end(), policy.mask_value);
    }
  }
  return out;
}

FeatureNormalizer::FeatureNormalizer(std::vector<float> mean, std::vector<float> inv_stddev)
    : mean_(std::move(mean)), inv_stddev_(std::move(inv_stddev)) {
  if (mean_.size() != inv_stddev_.size()) {
    throw ShapeError("feature normalizer: mean and scale widths differ");
  }
}

FeatureNormalizer FeatureNormalizer::Fit(std::span<const nn::Tensor<float>> utterances) {
  std::vector<double> sum, sum_sq;
  double count = 0;
  for (const auto& u : utterances) {
    if (u.empty()) continue;
    if (sum.empty()) {
      sum.assign(u.cols(), 0.0);
      sum_sq.assign(u.cols(), 0.0);
    }
    if (u.cols() != sum.size()) throw ShapeError("feature normalizer: mixed feature widths");
    for (std::size_t r = 0; r < u.rows(); ++r) {
      for (std::size_t c = 0; c < u.cols(); ++c) {
        sum[c] += u(r, c);
        sum_sq[c] += static_cast<double>(u(r, c)) * u(r, c);
      }
    }
    count += static_cast<double>(u.rows());
  }
  if (count == 0) throw UsageError("feature normalizer: no frames to fit");
  std::vector<float> mean(sum.size()), inv(sum.size());
  for (std::size_t c = 0; c < sum.size(); ++c) {
    const double mu = sum[c] / count;
    const double var = std::max(sum_sq[c] / count - mu * mu, 0.0);
    mean[c] = static_cast<float>(mu);
    inv[c] = static_cast<float>(1.0 / std::max(std::sqrt(var), 1e-5));
  }
  return FeatureNormalizer(std::move(mean), std::move(inv));
}

void FeatureNormalizer::Apply(nn::Tensor<float>& frames) const {
  if (empty() || frames.empty()) return;
  if (frames.cols() != mean_.size()) {
    throw ShapeError(fmt::format("feature normalizer fitted on width {}, got {}", mean_.size(),
                                 frames.cols()));
  }
  for (std::size_t r = 0; r < frames.rows(); ++r) {
    auto row = frames.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean_[c]) * inv_stddev_[c];
  }
}

}  // namespace mlasr::frontend
