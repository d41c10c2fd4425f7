#include "mlasr/harness/checkpoint.h"

#include <filesystem>

#include <fmt/format.h>

#include "mlasr/common/binary_io.h"
#include "mlasr/common/error.h"
#include "mlasr/common/hash.h"

namespace mlasr::harness {
namespace {

constexpr std::string_view kMagic = "MLCK";

template <typename T>
void PutScalar(BinaryWriter& w, T v) {
  if constexpr (sizeof(T) == 4) {
    w.F32(v);
  } else {
    w.F64(v);
  }
}

template <typename T>
T GetScalar(BinaryReader& r) {
  if constexpr (sizeof(T) == 4) {
    return r.F32();
  } else {
    return r.F64();
  }
}

template <typename T>
void PutTensor(BinaryWriter& w, const nn::Tensor<T>& t) {
  w.U32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.U64(d);
  w.U64(t.size());
  for (T v : t.values()) PutScalar(w, v);
}

template <typename T>
nn::Tensor<T> GetTensor(BinaryReader& r, std::string_view what) {
  const std::uint32_t rank = r.U32();
  if (rank > 8) throw IoError(fmt::format("{}: implausible tensor rank {}", what, rank));
  nn::Shape shape(rank);
  for (auto& d : shape) d = r.U64();
  const std::uint64_t count = r.U64();
  if (count > r.remaining() / sizeof(T)) throw IoError(fmt::format("{}: tensor overruns the file", what));
  std::vector<T> values(count);
  for (auto& v : values) v = GetScalar<T>(r);
  if (rank == 0 && count == 0) return {};
  if (nn::NumElements(shape) != count) {
    throw IoError(fmt::format("{}: tensor shape and element count disagree", what));
  }
  return nn::Tensor<T>(std::move(shape), std::move(values));
}

void PutDoubles(BinaryWriter& w, const std::vector<double>& v) {
  w.U32(static_cast<std::uint32_t>(v.size()));
  for (double x : v) w.F64(x);
}

std::vector<double> GetDoubles(BinaryReader& r) {
  std::vector<double> v(r.U32());
  for (auto& x : v) x = r.F64();
  return v;
}

void PutFloats(BinaryWriter& w, const std::vector<float>& v) {
  w.U32(static_cast<std::uint32_t>(v.size()));
  for (float x : v) w.F32(x);
}

std::vector<float> GetFloats(BinaryReader& r) {
  std::vector<float> v(r.U32());
  for (auto& x : v) x = r.F32();
  return v;
}

void PutSchedule(BinaryWriter& w, const train::MixingSchedule& s) {
  PutDoubles(w, s.weights);
  w.U64(static_cast<std::uint64_t>(s.effective_step));
}

train::MixingSchedule GetSchedule(BinaryReader& r) {
  train::MixingSchedule s;
  s.weights = GetDoubles(r);
  s.effective_step = static_cast<std::int64_t>(r.U64());
  return s;
}

// Validates magic, version and trailer; returns a reader positioned after
// the version field.
BinaryReader OpenVerified(std::string_view bytes, std::string_view origin, std::uint32_t& version) {
  const std::string what(origin);
  if (bytes.size() < kMagic.size() + 4 + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw IoError(fmt::format("{}: not a checkpoint file", origin));
  }
  BinaryReader header(bytes.substr(kMagic.size()), what);
  version = header.U32();
  if (version != kCheckpointVersion) {
    throw IoError(fmt::format("{}: checkpoint format version {} is not supported (expected {})",
                              origin, version, kCheckpointVersion));
  }
  const auto body = bytes.substr(0, bytes.size() - 8);
  BinaryReader trailer(bytes.substr(bytes.size() - 8), what);
  if (trailer.U64() != HashText(body)) {
    throw IoError(fmt::format("{}: integrity hash mismatch (file is corrupt or truncated)", origin));
  }
  return BinaryReader(body.substr(kMagic.size() + 4), what);
}

}  // namespace

template <typename T>
std::string SerializeCheckpoint(const train::TrainState<T>& s) {
  BinaryWriter w;
  w.Bytes(kMagic);
  w.U32(kCheckpointVersion);
  w.U8(sizeof(T));
  const std::string model_text = s.model.Serialize();
  w.String(model_text);
  w.U64(HashText(model_text));
  w.String(s.train.ToKeyValues().Serialize());
  w.U64(s.vocab_hash);
  w.U32(static_cast<std::uint32_t>(s.languages.size()));
  for (const auto& code : s.languages.codes()) w.String(code);
  w.U64(static_cast<std::uint64_t>(s.step));
  w.String(SerializeRng(s.sampler_rng));
  w.String(SerializeRng(s.augment_rng));

  PutSchedule(w, s.schedule);
  w.U32(static_cast<std::uint32_t>(s.history.size()));
  for (const auto& h : s.history) PutSchedule(w, h);
  w.U32(static_cast<std::uint32_t>(s.audit.size()));
  for (const auto& a : s.audit) {
    w.U64(static_cast<std::uint64_t>(a.submitted_after_step));
    w.U64(static_cast<std::uint64_t>(a.effective_step));
    PutDoubles(w, a.weights);
    w.U8(a.changed ? 1 : 0);
    w.String(a.source);
  }
  PutFloats(w, s.normalizer.mean());
  PutFloats(w, s.normalizer.inv_stddev());

  w.U32(static_cast<std::uint32_t>(s.params.size()));
  for (nn::ParamId id = 0; id < s.params.size(); ++id) {
    w.String(s.params.name(id));
    PutTensor(w, s.params.value(id));
  }
  const auto& slots = s.optimizer.slots();
  w.U32(static_cast<std::uint32_t>(slots.size()));
  for (const auto& slot : slots) {
    w.U64(static_cast<std::uint64_t>(slot.updates));
    PutTensor(w, slot.first);
    PutTensor(w, slot.second);
    PutTensor(w, slot.row);
    PutTensor(w, slot.col);
  }
  const std::uint64_t digest = HashText(w.buffer());
  w.U64(digest);
  return w.Take();
}

template <typename T>
train::TrainState<T> ParseCheckpoint(std::string_view bytes, std::string_view origin) {
  std::uint32_t version = 0;
  BinaryReader r = OpenVerified(bytes, origin, version);
  const int scalar_bytes = r.U8();
  if (scalar_bytes != static_cast<int>(sizeof(T))) {
    throw UsageError(fmt::format("{}: checkpoint holds {}-bit parameters, {}-bit requested", origin,
                                 8 * scalar_bytes, 8 * sizeof(T)));
  }
  train::TrainState<T> s;
  const std::string model_text = r.String();
  if (r.U64() != HashText(model_text)) {
    throw IoError(fmt::format("{}: model config hash mismatch", origin));
  }
  s.model = model::ModelConfig::FromKeyValues(KeyValues::Parse(model_text));
  s.train = train::TrainConfig::FromKeyValues(KeyValues::Parse(r.String()));
  s.vocab_hash = r.U64();
  std::vector<std::string> codes(r.U32());
  for (auto& c : codes) c = r.String();
  s.languages = train::LanguageTable(std::move(codes));
  s.step = static_cast<std::int64_t>(r.U64());
  s.sampler_rng = DeserializeRng(r.String());
  s.augment_rng = DeserializeRng(r.String());

  s.schedule = GetSchedule(r);
  s.history.resize(r.U32());
  for (auto& h : s.history) h = GetSchedule(r);
  s.audit.resize(r.U32());
  for (auto& a : s.audit) {
    a.submitted_after_step = static_cast<std::int64_t>(r.U64());
    a.effective_step = static_cast<std::int64_t>(r.U64());
    a.weights = GetDoubles(r);
    a.changed = r.U8() != 0;
    a.source = r.String();
  }
  auto mean = GetFloats(r);
  auto inv = GetFloats(r);
  if (!mean.empty()) s.normalizer = frontend::FeatureNormalizer(std::move(mean), std::move(inv));

  const std::uint32_t num_params = r.U32();
  for (std::uint32_t i = 0; i < num_params; ++i) {
    std::string name = r.String();
    s.params.Insert(name, GetTensor<T>(r, name));
  }
  // The stored names and shapes must be exactly what this config builds.
  {
    nn::ParameterSet<T> expected;
    Rng rng(0);
    const model::AsrModel<T> built(s.model, expected, rng);
    if (expected.size() != s.params.size()) {
      throw IoError(fmt::format("{}: {} parameters stored, config builds {}", origin,
                                s.params.size(), expected.size()));
    }
    for (nn::ParamId id = 0; id < expected.size(); ++id) {
      if (expected.name(id) != s.params.name(id) ||
          !expected.value(id).SameShape(s.params.value(id))) {
        throw IoError(fmt::format("{}: parameter '{}' does not match the stored config", origin,
                                  s.params.name(id)));
      }
    }
  }
  s.optimizer = train::Optimizer<T>(s.train.optimizer, s.params);
  if (r.U32() != s.params.size()) throw IoError(fmt::format("{}: optimizer slot count mismatch", origin));
  for (auto& slot : s.optimizer.slots()) {
    slot.updates = static_cast<std::int64_t>(r.U64());
    slot.first = GetTensor<T>(r, "slot");
    slot.second = GetTensor<T>(r, "slot");
    slot.row = GetTensor<T>(r, "slot");
    slot.col = GetTensor<T>(r, "slot");
  }
  if (!r.done()) throw IoError(fmt::format("{}: trailing bytes after optimizer state", origin));
  return s;
}

template <typename T>
void SaveCheckpoint(const std::string& path, const train::TrainState<T>& state) {
  // Write-then-rename so a crash never leaves a half-written checkpoint.
  const std::string tmp = path + ".tmp";
  WriteFileBytes(tmp, SerializeCheckpoint(state));
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(fmt::format("cannot move checkpoint into '{}': {}", path, ec.message()));
}

template <typename T>
train::TrainState<T> LoadCheckpoint(const std::string& path) {
  return ParseCheckpoint<T>(ReadFileBytes(path), path);
}

CheckpointInfo PeekCheckpoint(std::string_view bytes, std::string_view origin) {
  CheckpointInfo info;
  BinaryReader r = OpenVerified(bytes, origin, info.version);
  info.scalar_bytes = r.U8();
  info.model_config = r.String();
  r.U64();
  r.String();
  r.U64();
  const std::uint32_t languages = r.U32();
  for (std::uint32_t i = 0; i < languages; ++i) r.String();
  info.step = static_cast<std::int64_t>(r.U64());
  return info;
}

CheckpointInfo PeekCheckpointFile(const std::string& path) {
  return PeekCheckpoint(ReadFileBytes(path), path);
}

#define MLASR_INSTANTIATE(T)                                                                 \
  template std::string SerializeCheckpoint<T>(const train::TrainState<T>&);                  \
  template train::TrainState<T> ParseCheckpoint<T>(std::string_view, std::string_view);      \
  template void SaveCheckpoint<T>(const std::string&, const train::TrainState<T>&);          \
  template train::TrainState<T> LoadCheckpoint<T>(const std::string&);

MLASR_INSTANTIATE(float)
MLASR_INSTANTIATE(double)

#undef MLASR_INSTANTIATE

}  // namespace mlasr::harness
