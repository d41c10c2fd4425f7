#include "mlasr/capacity/capacity.h"

#include <algorithm>
#include <cctype>
#include <limits>

#include <fmt/format.h>

#include "json.hpp"
#include "mlasr/common/error.h"

namespace mlasr::capacity {

using model::Conditioning;
using model::DecoderConfig;
using model::DecoderKind;
using model::ModelConfig;
using model::Routing;

namespace formula {

Count Linear(Count in, Count out, bool bias) { return in * out + (bias ? out : 0); }

Count Norm(Count dim) { return 2 * dim; }

Count FeedForward(Count dim, Count hidden) {
  return Norm(dim) + Linear(dim, hidden) + Linear(hidden, dim);
}

Count DotAttention(Count query_dim, Count memory_dim, Count dim, bool relative) {
  Count n = Linear(query_dim, dim) + Linear(memory_dim, dim, false) + Linear(memory_dim, dim) +
            Linear(dim, dim);
  if (relative) n += Linear(dim, dim, false) + 2 * dim;
  return n;
}

Count ConvModule(Count dim, Count kernel) {
  return Norm(dim) + Linear(dim, 2 * dim) + kernel * dim + dim + Norm(dim) + Linear(dim, dim);
}

Count ConformerLayer(Count dim, Count ffn_hidden, Count kernel, bool relative) {
  return 2 * FeedForward(dim, ffn_hidden) + Norm(dim) + DotAttention(dim, dim, dim, relative) +
         ConvModule(dim, kernel) + Norm(dim);
}

Count Adapter(Count dim, Count bottleneck) {
  return Norm(dim) + Linear(dim, bottleneck) + Linear(bottleneck, dim);
}

Count ProjectedLstm(Count input, Count cell, Count output) {
  return Linear(input + output, 4 * cell) + Linear(cell, output, false);
}

Count AdditiveAttention(Count memory_dim, Count dim) {
  return Linear(memory_dim, dim) + Linear(dim, dim, false) + Linear(memory_dim, dim) + dim;
}

Count TransformerDecoderLayer(Count dim, Count encoder_dim, Count hidden) {
  return Norm(dim) + DotAttention(dim, dim, dim, false) + Norm(dim) +
         DotAttention(dim, encoder_dim, dim, false) + FeedForward(dim, hidden);
}

Count DecoderBody(const DecoderConfig& c, Count encoder_dim) {
  const Count p = c.model_dim, h = c.hidden_dim, layers = c.num_layers;
  if (c.kind == DecoderKind::kLas) {
    Count n = ProjectedLstm(2 * p, h, p) + (layers - 1) * ProjectedLstm(p, h, p);
    return n + AdditiveAttention(encoder_dim, p);
  }
  return layers * TransformerDecoderLayer(p, encoder_dim, h) + Norm(p);
}

}  // namespace formula

namespace {

constexpr int kBlock1Layers = 4;

Count OutputLayer(const DecoderConfig& c, Count vocab) {
  const Count in = c.kind == DecoderKind::kLas ? 2 * c.model_dim : c.model_dim;
  return formula::Linear(in, vocab);
}

Count SizeOf(const nn::Shape& shape) {
  Count n = 1;
  for (auto d : shape) n *= static_cast<Count>(d);
  return n;
}

Count Accumulators(const std::vector<NamedShape>& inventory) {
  Count n = 0;
  for (const auto& p : inventory) {
    n += IsFactored(p.shape.size()) ? static_cast<Count>(p.shape[0] + p.shape[1]) : SizeOf(p.shape);
  }
  return n;
}

// Mirrors of the model builders, emitting names and shapes only.
class InventoryBuilder {
 public:
  void Linear(const std::string& name, std::size_t in, std::size_t out, bool bias = true) {
    Add(name + "/w", {in, out});
    if (bias) Add(name + "/b", {out});
  }
  void Norm(const std::string& name, std::size_t dim) {
    Add(name + "/gamma", {dim});
    Add(name + "/beta", {dim});
  }
  void FeedForward(const std::string& name, std::size_t dim, std::size_t hidden) {
    Norm(name + "/norm", dim);
    Linear(name + "/up", dim, hidden);
    Linear(name + "/down", hidden, dim);
  }
  void DotAttention(const std::string& name, std::size_t q, std::size_t m, std::size_t d,
                    bool relative) {
    Linear(name + "/query", q, d);
    Linear(name + "/key", m, d, false);
    Linear(name + "/value", m, d);
    Linear(name + "/output", d, d);
    if (relative) {
      Linear(name + "/position", d, d, false);
      Add(name + "/content_bias", {d});
      Add(name + "/position_bias", {d});
    }
  }
  void Conformer(const std::string& name, std::size_t d, std::size_t hidden, std::size_t kernel,
                 bool relative) {
    FeedForward(name + "/ffn_in", d, hidden);
    Norm(name + "/attention_norm", d);
    DotAttention(name + "/attention", d, d, d, relative);
    const std::string conv = name + "/conv";
    Norm(conv + "/norm", d);
    Linear(conv + "/pointwise_in", d, 2 * d);
    Add(conv + "/depthwise/w", {kernel, d});
    Add(conv + "/depthwise/b", {d});
    Norm(conv + "/group_norm", d);
    Linear(conv + "/pointwise_out", d, d);
    FeedForward(name + "/ffn_out", d, hidden);
    Norm(name + "/final_norm", d);
  }
  void Add(std::string name, nn::Shape shape) { out.push_back({std::move(name), std::move(shape)}); }

  std::vector<NamedShape> out;
};

std::size_t U(int v) { return static_cast<std::size_t>(v); }

}  // namespace

std::vector<NamedShape> Inventory(const ModelConfig& config) {
  config.Validate();
  const auto& enc = config.encoder;
  const std::size_t d = U(enc.model_dim);
  InventoryBuilder b;
  b.Linear("encoder/input_projection", U(enc.input_dim()), d);
  auto block_of = [](int i) { return i < kBlock1Layers ? 1 : (i == kBlock1Layers ? 2 : 3); };
  for (int i = 0; i < enc.num_layers; ++i) {
    const std::size_t width = block_of(i) == 2 ? 2 * d : d;
    b.Conformer(fmt::format("encoder/block{}/layer{}", block_of(i), i), width,
                U(enc.ffn_hidden(int(width))), U(enc.conv_kernel), enc.relative_position_attention);
    if (i == kBlock1Layers) b.Linear("encoder/block2/projection", 2 * d, d);
  }
  for (int i = 0; i < enc.num_layers; ++i) {
    const std::size_t width = block_of(i) == 2 ? 2 * d : d;
    for (int e = 0; e < enc.adapter_entries(); ++e) {
      const std::string entry =
          enc.conditioning == Conditioning::kSharedAdapter ? "shared" : fmt::format("lang{}", e);
      const std::string name = fmt::format("encoder/adapter/layer{}/{}", i, entry);
      b.Norm(name + "/norm", width);
      b.Linear(name + "/down", width, U(enc.bottleneck()));
      b.Linear(name + "/up", U(enc.bottleneck()), width);
    }
  }
  const auto& dec = config.decoder;
  const std::size_t p = U(dec.model_dim), h = U(dec.hidden_dim), v = U(config.vocab_size);
  for (int k = 0; k < dec.num_instances(); ++k) {
    const std::string name = fmt::format("decoder/{}", k);
    b.Add(name + "/embedding", {v, p});
    if (dec.kind == DecoderKind::kLas) {
      for (int l = 0; l < dec.num_layers; ++l) {
        const std::string lstm = fmt::format("{}/lstm{}", name, l);
        b.Linear(lstm + "/gates", (l == 0 ? 2 * p : p) + p, 4 * h);
        b.Linear(lstm + "/projection", h, p, false);
      }
      b.Linear(name + "/attention/key", d, p);
      b.Linear(name + "/attention/query", p, p, false);
      b.Linear(name + "/attention/value", d, p);
      b.Add(name + "/attention/score", {p, 1});
      b.Linear(name + "/output", 2 * p, v);
    } else {
      for (int l = 0; l < dec.num_layers; ++l) {
        const std::string layer = fmt::format("{}/layer{}", name, l);
        b.Norm(layer + "/self_norm", p);
        b.DotAttention(layer + "/self_attention", p, p, p, false);
        b.Norm(layer + "/cross_norm", p);
        b.DotAttention(layer + "/cross_attention", p, d, p, false);
        b.FeedForward(layer + "/ffn", p, h);
      }
      b.Norm(name + "/final_norm", p);
      b.Linear(name + "/output", p, v);
    }
  }
  return std::move(b.out);
}

Component Classify(std::string_view name) {
  if (name.starts_with("encoder/input_projection/")) return Component::kInputProjection;
  if (name.starts_with("encoder/adapter/")) return Component::kAdapters;
  if (name.starts_with("encoder/")) return Component::kEncoderBlocks;
  if (name.starts_with("decoder/")) {
    if (name.ends_with("/embedding")) return Component::kEmbeddings;
    const auto second = name.find('/', 8);
    if (second != std::string_view::npos && name.substr(second).starts_with("/output/")) {
      return Component::kOutputProjection;
    }
    return Component::kDecoders;
  }
  throw UsageError(fmt::format("parameter '{}' belongs to no known component", name));
}

Components Tally(const std::vector<NamedShape>& parameters) {
  Components c;
  for (const auto& p : parameters) {
    const Count n = SizeOf(p.shape);
    switch (Classify(p.name)) {
      case Component::kInputProjection: c.input_projection += n; break;
      case Component::kEncoderBlocks: c.encoder_blocks += n; break;
      case Component::kAdapters: c.adapters += n; break;
      case Component::kDecoders: c.decoders += n; break;
      case Component::kEmbeddings: c.embeddings += n; break;
      case Component::kOutputProjection: c.output_projection += n; break;
    }
  }
  return c;
}

CapacityReport CountParams(const ModelConfig& config) {
  config.Validate();
  const auto& enc = config.encoder;
  const Count d = enc.model_dim, kernel = enc.conv_kernel;
  const bool rel = enc.relative_position_attention;
  const Count layer = formula::ConformerLayer(d, enc.ffn_hidden(int(d)), kernel, rel);
  const Count wide = formula::ConformerLayer(2 * d, enc.ffn_hidden(int(2 * d)), kernel, rel);

  CapacityReport r;
  r.block1 = kBlock1Layers * layer;
  r.block2 = wide + formula::Linear(2 * d, d);
  r.block3 = (enc.num_layers - kBlock1Layers - 1) * layer;
  auto& c = r.components;
  c.input_projection = formula::Linear(enc.input_dim(), d);
  c.encoder_blocks = r.block1 + r.block2 + r.block3;
  c.adapters = enc.adapter_entries() *
               ((enc.num_layers - 1) * formula::Adapter(d, enc.bottleneck()) +
                formula::Adapter(2 * d, enc.bottleneck()));

  const auto& dec = config.decoder;
  r.decoder_instances = dec.num_instances();
  const Count k = r.decoder_instances, v = config.vocab_size;
  c.decoders = k * formula::DecoderBody(dec, d);
  c.embeddings = k * v * dec.model_dim;
  c.output_projection = k * OutputLayer(dec, v);
  r.factored_accumulators = Accumulators(Inventory(config));
  return r;
}

double ReplicationFactor(const CapacityReport& report, OptimizerKind optimizer) {
  if (optimizer == OptimizerKind::kAdam) return 3.0;
  const double total = static_cast<double>(report.total());
  return 2.0 + (total > 0 ? static_cast<double>(report.factored_accumulators) / total : 0.0);
}

MemoryVerdict CheckMemory(const CapacityReport& report, OptimizerKind optimizer,
                          double bytes_per_param, int partitions, double per_partition_limit) {
  if (partitions < 1) throw UsageError(fmt::format("partitions must be >= 1, got {}", partitions));
  MemoryVerdict v;
  v.replication = ReplicationFactor(report, optimizer);
  v.total_bytes = report.Bytes(bytes_per_param) * v.replication;
  v.per_partition_bytes = v.total_bytes / partitions;
  v.limit_bytes = per_partition_limit;
  v.margin = v.per_partition_bytes > 0 ? per_partition_limit / v.per_partition_bytes
                                       : std::numeric_limits<double>::infinity();
  v.feasible = v.per_partition_bytes <= per_partition_limit;
  return v;
}

namespace {

constexpr int kTableWidth = 16;  // one-hot width for the 15-language models

// Germanic, Italic, Arabic, Indo-Iranian, others; the spare slot goes to others.
std::vector<int> FiveFamilies() { return {0, 0, 1, 1, 1, 2, 2, 3, 3, 3, 4, 4, 4, 4, 4, 4}; }

ModelConfig Encoder(ModelConfig c, int layers, int dim, Conditioning conditioning,
                    int languages = kTableWidth) {
  c.encoder.num_layers = layers;
  c.encoder.model_dim = dim;
  c.encoder.attention_heads = 8;
  c.encoder.conv_kernel = 15;
  c.encoder.conditioning = conditioning;
  c.encoder.num_languages = languages;
  return c;
}

ModelConfig Las(ModelConfig c, int layers, int dim, int cell) {
  c.decoder.kind = DecoderKind::kLas;
  c.decoder.num_layers = layers;
  c.decoder.model_dim = dim;
  c.decoder.hidden_dim = cell;
  c.decoder.attention_heads = 4;
  return c;
}

ModelConfig Transformer(ModelConfig c, int layers, int dim) {
  c.decoder.kind = DecoderKind::kTransformer;
  c.decoder.num_layers = layers;
  c.decoder.model_dim = dim;
  c.decoder.hidden_dim = 4 * dim;
  c.decoder.attention_heads = 8;
  return c;
}

ModelConfig WithVocab(ModelConfig c, int vocab) {
  c.vocab_size = vocab;
  return c;
}

std::vector<CatalogueEntry> BuildCatalogue() {
  using enum Conditioning;
  constexpr int kVocab = 3328;
  std::vector<CatalogueEntry> out;
  auto add = [&](std::string name, std::string description, ModelConfig config,
                 std::optional<double> size, double tolerance, OptimizerKind optimizer,
                 std::string reported, int partitions = 512) {
    out.push_back({std::move(name), std::move(description), std::move(config), size, tolerance,
                   optimizer, partitions, std::move(reported)});
  };

  const ModelConfig base = WithVocab(ModelConfig{}, kVocab);
  add("monolingual", "per-language Conformer 17x512 with a 2x640 LAS decoder",
      WithVocab(Las(Encoder(base, 17, 512, kNone, 1), 2, 640, 2048), 128), 140e6, 0.15,
      OptimizerKind::kAdam, "avg WER 9.29%");
  add("220m-adapter", "multilingual Conformer 17x512 with per-language adapters, LAS 2x640",
      Las(Encoder(base, 17, 512, kPerLanguageAdapter), 2, 640, 2048), 220e6, 0.30,
      OptimizerKind::kAdam, "avg WER 9.43% (10.38% @200K)");
  add("220m-shared-adapter", "one adapter shared by all languages, otherwise as 220m-adapter",
      Las(Encoder(base, 17, 512, kSharedAdapter), 2, 640, 2048), std::nullopt, 0.30,
      OptimizerKind::kAdam, "10.86% @200K");
  add("146m-bias", "one-hot language vector appended to the input, LAS 2x640",
      Las(Encoder(base, 17, 512, kBiasConcat), 2, 640, 2048), 146e6, 0.30, OptimizerKind::kAdam,
      "10.93% @200K");
  add("354m-single", "bias-only encoder with one 6x768 LAS decoder",
      Las(Encoder(base, 17, 512, kBiasConcat), 6, 768, 3074), 354e6, 0.30, OptimizerKind::kAdam,
      "10.13% @200K");
  ModelConfig multi = Las(Encoder(base, 17, 512, kBiasConcat), 2, 640, 2048);
  multi.decoder.routing = Routing::kPerFamily;
  multi.decoder.families = FiveFamilies();
  add("354m-multi", "bias-only encoder with five per-family 2x640 LAS decoders", multi, 354e6,
      0.30, OptimizerKind::kAdam, "10.28% @200K");
  add("500m-las", "encoder widened to 22x640, 6x768 LAS decoder",
      Las(Encoder(base, 22, 640, kBiasConcat), 6, 768, 3074), 500e6, 0.30, OptimizerKind::kAdam,
      "9.63% @200K, 9.13% @1.1M");
  add("500m-transformer", "encoder 22x640 with a 12x768 Transformer decoder",
      Transformer(Encoder(base, 22, 640, kBiasConcat), 12, 768), 500e6, 0.30,
      OptimizerKind::kAdafactor, "9.26% at convergence");

  struct Row {
    const char* name;
    int enc_layers, enc_dim, dec_layers, dec_dim;
    const char* reported;
  };
  const Row rows[] = {
      {"b0", 17, 768, 12, 768, "loss 0.158, 5530 ex/s, 10.36% @200K"},
      {"e1", 61, 768, 12, 768, "loss 0.155, 2352 ex/s, 10.13% @200K"},
      {"e2", 17, 1408, 12, 768, "loss 0.150, 3419 ex/s, 10.17% @200K"},
      {"e3", 33, 1024, 12, 768, "loss 0.149, 2975 ex/s, 10.05% @200K, 9.07% converged"},
      {"e4", 26, 1152, 12, 768, "loss 0.151, 3198 ex/s, 10.23% @200K"},
      {"e5", 17, 768, 76, 768, "loss 0.143, 2111 ex/s, 10.15% @200K"},
      {"e6", 17, 768, 12, 1920, "loss 0.149, 3170 ex/s, 10.48% @200K"},
      {"e7", 17, 768, 22, 1408, "loss 0.147, 3204 ex/s, 10.37% @200K"},
      {"e8", 22, 1024, 18, 1152, "loss 0.147, 2870 ex/s, 10.08% @200K"},
  };
  for (const auto& row : rows) {
    const bool baseline = std::string_view(row.name) == "b0";
    add(row.name, fmt::format("Conformer {}x{}, Transformer {}x{}", row.enc_layers, row.enc_dim,
                              row.dec_layers, row.dec_dim),
        Transformer(Encoder(base, row.enc_layers, row.enc_dim, kBiasConcat), row.dec_layers,
                    row.dec_dim),
        baseline ? 370e6 : 1e9, 0.15, OptimizerKind::kAdafactor, row.reported);
  }
  add("10b", "e3 encoder deepened to 86 layers and widened to 2048",
      Transformer(Encoder(base, 86, 2048, kBiasConcat), 12, 768), 10e9, 0.10,
      OptimizerKind::kAdafactor, "9.04% @330K", 1024);
  add("e3-32lang", "e3 with a 32-wide language vector and 3712 graphemes",
      WithVocab(Transformer(Encoder(base, 33, 1024, kBiasConcat, 32), 12, 768), 3712),
      std::nullopt, 0.15, OptimizerKind::kAdafactor, "warm start from e3");
  return out;
}

std::string Lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

const std::vector<CatalogueEntry>& Catalogue() {
  static const std::vector<CatalogueEntry> entries = BuildCatalogue();
  return entries;
}

const CatalogueEntry& FindEntry(std::string_view name) {
  const std::string key = Lower(name);
  for (const auto& e : Catalogue()) {
    if (e.name == key) return e;
  }
  std::string names;
  for (const auto& e : Catalogue()) names += (names.empty() ? "" : ", ") + e.name;
  throw UsageError(fmt::format("no catalogue entry '{}' (known: {})", name, names));
}

std::string RenderReport(const std::string& title, const CapacityReport& r) {
  const auto& c = r.components;
  auto line = [](std::string_view label, Count n) {
    return fmt::format("  {:<22} {:>16}\n", label, n);
  };
  std::string out = title + "\n";
  out += line("input projection", c.input_projection);
  out += line("encoder blocks", c.encoder_blocks);
  out += line("  block 1", r.block1);
  out += line("  block 2", r.block2);
  out += line("  block 3", r.block3);
  out += line("adapters", c.adapters);
  out += line(fmt::format("decoders (x{})", r.decoder_instances), c.decoders);
  out += line("embeddings", c.embeddings);
  out += line("output projection", c.output_projection);
  out += line("total", r.total());
  out += fmt::format("  {:<22} {:>16.3f}\n", "total (millions)", double(r.total()) / 1e6);
  return out;
}

std::string ReportJsonLines(const std::string& title, const CapacityReport& r,
                            const std::optional<MemoryVerdict>& memory) {
  const auto& c = r.components;
  const std::pair<const char*, Count> parts[] = {
      {"input_projection", c.input_projection}, {"encoder_blocks", c.encoder_blocks},
      {"adapters", c.adapters},                 {"decoders", c.decoders},
      {"embeddings", c.embeddings},             {"output_projection", c.output_projection}};
  std::string out;
  for (const auto& [name, n] : parts) {
    out += nlohmann::json{{"type", "component"}, {"config", title}, {"component", name},
                          {"params", n}}
               .dump() +
           "\n";
  }
  nlohmann::json summary = {{"type", "summary"},   {"config", title},
                            {"total", r.total()},  {"block1", r.block1},
                            {"block2", r.block2},  {"block3", r.block3},
                            {"decoder_instances", r.decoder_instances},
                            {"factored_accumulators", r.factored_accumulators}};
  if (memory) {
    summary["memory"] = {{"replication", memory->replication},
                         {"total_bytes", memory->total_bytes},
                         {"per_partition_bytes", memory->per_partition_bytes},
                         {"limit_bytes", memory->limit_bytes},
                         {"margin", memory->margin},
                         {"feasible", memory->feasible}};
  }
  return out + summary.dump() + "\n";
}

}  // namespace mlasr::capacity
