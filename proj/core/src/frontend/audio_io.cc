#include "mlasr/frontend/audio_io.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mlasr/common/binary_io.h"
#include "mlasr/common/error.h"

namespace mlasr::frontend {

WavAudio ReadWav(const std::string& path) {
  const std::string bytes = ReadFileBytes(path);
  BinaryReader in(bytes, path);
  if (in.Bytes(4) != "RIFF") throw IoError(path + ": not a RIFF file");
  in.U32();
  if (in.Bytes(4) != "WAVE") throw IoError(path + ": not a WAVE file");
  WavAudio audio;
  bool have_format = false;
  while (!in.done()) {
    const std::string_view id = in.Bytes(4);
    const std::uint32_t size = in.U32();
    if (id == "fmt ") {
      BinaryReader fmt_chunk(in.Bytes(size), path);
      const std::uint16_t format = fmt_chunk.U16();
      const std::uint16_t channels = fmt_chunk.U16();
      audio.sample_rate = static_cast<int>(fmt_chunk.U32());
      fmt_chunk.U32();  // byte rate
      fmt_chunk.U16();  // block align
      const std::uint16_t bits = fmt_chunk.U16();
      if (format != 1 || channels != 1 || bits != 16) {
        throw IoError(fmt::format("{}: need 16-bit mono PCM, got format {} with {} channels at {} bits",
                                  path, format, channels, bits));
      }
      have_format = true;
    } else if (id == "data") {
      if (!have_format) throw IoError(path + ": data chunk before fmt chunk");
      BinaryReader data(in.Bytes(size), path);
      audio.samples.reserve(size / 2);
      while (data.remaining() >= 2) {
        audio.samples.push_back(static_cast<std::int16_t>(data.U16()) / 32768.0f);
      }
      return audio;
    } else {
      in.Bytes(size + (size & 1));
    }
  }
  throw IoError(path + ": no data chunk");
}

void WriteWav(const std::string& path, const WavAudio& audio) {
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  BinaryWriter out;
  out.Bytes("RIFF");
  out.U32(36 + data_bytes);
  out.Bytes("WAVE");
  out.Bytes("fmt ");
  out.U32(16);
  out.U16(1);
  out.U16(1);
  out.U32(static_cast<std::uint32_t>(audio.sample_rate));
  out.U32(static_cast<std::uint32_t>(audio.sample_rate * 2));
  out.U16(2);
  out.U16(16);
  out.Bytes("data");
  out.U32(data_bytes);
  for (float s : audio.samples) {
    const float clipped = std::clamp(s, -1.0f, 32767.0f / 32768.0f);
    out.U16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32768.0f))));
  }
  WriteFileBytes(path, out.buffer());
}

FeatureFrames ReadFeatureFile(const std::string& path) {
  const std::string bytes = ReadFileBytes(path);
  BinaryReader in(bytes, path);
  if (in.Bytes(4) != "FEAT") throw IoError(path + ": missing FEAT magic");
  const std::uint32_t version = in.U32();
  if (version != kFeatureFileVersion) {
    throw IoError(fmt::format("{}: unsupported feature file version {}", path, version));
  }
  const std::uint32_t steps = in.U32();
  const std::uint32_t dim = in.U32();
  FeatureFrames out;
  if (dim == static_cast<std::uint32_t>(kMelBins)) {
    out.frame_rate_ms = 10;
  } else if (dim == static_cast<std::uint32_t>(kStackedDim)) {
    out.frame_rate_ms = 30;
  } else {
    throw IoError(fmt::format("{}: feature dim {} is neither {} nor {}", path, dim, kMelBins,
                              kStackedDim));
  }
  if (in.remaining() != static_cast<std::size_t>(steps) * dim * 4) {
    throw IoError(fmt::format("{}: payload holds {} bytes, header promises {}x{} floats", path,
                              in.remaining(), steps, dim));
  }
  out.frames = nn::Tensor<float>({steps, dim});
  for (float& v : out.frames.values()) v = in.F32();
  return out;
}

void WriteFeatureFile(const std::string& path, const FeatureFrames& features) {
  BinaryWriter out;
  out.Bytes("FEAT");
  out.U32(kFeatureFileVersion);
  out.U32(static_cast<std::uint32_t>(features.num_frames()));
  out.U32(static_cast<std::uint32_t>(features.dim()));
  for (float v : features.frames.values()) out.F32(v);
  WriteFileBytes(path, out.buffer());
}

}  // namespace mlasr::frontend
