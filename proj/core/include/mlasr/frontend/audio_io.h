#pragma once

#include <string>
#include <vector>

#include "mlasr/frontend/features.h"

namespace mlasr::frontend {

struct WavAudio {
  std::vector<float> samples;  // mono, scaled to [-1, 1)
  int sample_rate = 16000;
};

// 16-bit little-endian PCM, mono.
WavAudio ReadWav(const std::string& path);
void WriteWav(const std::string& path, const WavAudio& audio);

// Feature file: "FEAT", u32 version, u32 T, u32 D, then T*D little-endian
// f32 values. D 80 reads back at 10 ms, D 240 at 30 ms.
inline constexpr std::uint32_t kFeatureFileVersion = 1;
FeatureFrames ReadFeatureFile(const std::string& path);
void WriteFeatureFile(const std::string& path, const FeatureFrames& features);

}  // namespace mlasr::frontend
