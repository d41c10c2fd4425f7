#pragma once

#include <span>
#include <string>
#include <vector>

#include "mlasr/common/random.h"
#include "mlasr/nn/tensor.h"

namespace mlasr::frontend {

inline constexpr int kMelBins = 80;
inline constexpr int kStackFactor = 3;
inline constexpr int kStackedDim = kMelBins * kStackFactor;

// T x dim log-Mel frames at 10 ms (dim 80) or, after stacking, 30 ms (dim 240).
struct FeatureFrames {
  nn::Tensor<float> frames;
  int frame_rate_ms = 10;

  std::size_t num_frames() const { return frames.empty() ? 0 : frames.rows(); }
  int dim() const { return frames.rank() == 2 ? static_cast<int>(frames.cols()) : 0; }
};

struct LogMelOptions {
  double window_ms = 32.0;
  double hop_ms = 10.0;
  int num_bins = kMelBins;
  double low_hz = 125.0;
  double high_hz = 0.0;  // 0 means Nyquist
  // Filterbank outputs are clamped here before the log.
  double floor = 1e-6;
};

// Mel filterbank over the one-sided spectrum of an fft_size transform:
// num_bins rows of (fft_size / 2 + 1) triangular HTK-Mel weights.
std::vector<std::vector<double>> MelFilterbank(int num_bins, int fft_size, int sample_rate,
                                               double low_hz, double high_hz);

// pcm holds samples in [-1, 1]. Uses a Hann window and magnitude spectrum.
FeatureFrames ComputeLogMel(std::span<const float> pcm, int sample_rate,
                            const LogMelOptions& options = {});

// 80-D @ 10 ms -> 240-D @ 30 ms; the tail is padded by repeating the last frame.
FeatureFrames StackAndSubsample(const FeatureFrames& input);
// Inverse of StackAndSubsample for inputs whose length was a multiple of 3.
FeatureFrames Unstack(const FeatureFrames& stacked);

struct SpecAugmentPolicy {
  int num_freq_masks = 2;
  int max_freq_len = 27;
  int num_time_masks = 2;
  int max_time_len = 50;
  float mask_value = 0.0f;

  static SpecAugmentPolicy Identity() { return {0, 0, 0, 0, 0.0f}; }
  void Validate() const;
  bool operator==(const SpecAugmentPolicy&) const = default;
};

// Frequency masks first, then time masks. Each length is uniform on
// [0, max_len] clipped to the axis; each start is uniform over valid offsets.
// For stacked input the frequency axis is the full feature width.
FeatureFrames SpecAugment(const FeatureFrames& input, const SpecAugmentPolicy& policy, Rng& rng);

// Global per-feature mean/variance normalization fitted on training frames.
class FeatureNormalizer {
 public:
  FeatureNormalizer() = default;
  FeatureNormalizer(std::vector<float> mean, std::vector<float> inv_stddev);

  static FeatureNormalizer Fit(std::span<const nn::Tensor<float>> utterances);

  void Apply(nn::Tensor<float>& frames) const;
  bool empty() const { return mean_.empty(); }
  const std::vector<float>& mean() const { return mean_; }
  const std::vector<float>& inv_stddev() const { return inv_stddev_; }

 private:
  std::vector<float> mean_;
  std::vector<float> inv_stddev_;
};

}  // namespace mlasr::frontend
