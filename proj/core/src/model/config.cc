#include "mlasr/model/config.h"

#include <algorithm>
#include <sstream>

#include <fmt/format.h>

#include "mlasr/common/error.h"

namespace mlasr::model {

std::string ToString(Conditioning c) {
  switch (c) {
    case Conditioning::kNone: return "none";
    case Conditioning::kBiasConcat: return "bias_concat";
    case Conditioning::kPerLanguageAdapter: return "per_language_adapter";
    case Conditioning::kSharedAdapter: return "shared_adapter";
  }
  return "?";
}

std::string ToString(DecoderKind k) {
  return k == DecoderKind::kLas ? "las_lstm" : "transformer";
}

std::string ToString(Routing r) {
  return r == Routing::kSingle ? "single" : "per_family";
}

Conditioning ParseConditioning(const std::string& s) {
  for (auto c : {Conditioning::kNone, Conditioning::kBiasConcat,
                 Conditioning::kPerLanguageAdapter, Conditioning::kSharedAdapter}) {
    if (ToString(c) == s) return c;
  }
  throw ConfigError(fmt::format("unknown conditioning '{}'", s));
}

DecoderKind ParseDecoderKind(const std::string& s) {
  if (s == "las_lstm" || s == "las") return DecoderKind::kLas;
  if (s == "transformer") return DecoderKind::kTransformer;
  throw ConfigError(fmt::format("unknown decoder kind '{}'", s));
}

Routing ParseRouting(const std::string& s) {
  if (s == "single") return Routing::kSingle;
  if (s == "per_family") return Routing::kPerFamily;
  throw ConfigError(fmt::format("unknown decoder routing '{}'", s));
}

void EncoderConfig::Validate() const {
  if (num_layers < 5) {
    throw ConfigError(fmt::format(
        "encoder needs at least 5 layers for its 4/1/rest block layout, got {}", num_layers));
  }
  if (model_dim < 1 || attention_heads < 1 || model_dim % attention_heads != 0) {
    throw ConfigError(fmt::format("encoder model_dim {} is not divisible by {} heads",
                                  model_dim, attention_heads));
  }
  if (conv_kernel < 1 || conv_kernel % 2 == 0) {
    throw ConfigError(fmt::format("encoder conv_kernel must be odd and positive, got {}",
                                  conv_kernel));
  }
  if (ffn_expansion.num < 1 || ffn_expansion.den < 1 || ffn_hidden(model_dim) < 1) {
    throw ConfigError("encoder ffn_expansion must be a positive ratio");
  }
  if (num_languages < 1) throw ConfigError("encoder num_languages must be at least 1");
  if (group_norm_groups < 1 || model_dim % group_norm_groups != 0) {
    throw ConfigError(fmt::format("group_norm_groups {} does not divide model_dim {}",
                                  group_norm_groups, model_dim));
  }
  if (has_adapters() && bottleneck() < 1) {
    throw ConfigError("adapter bottleneck must be at least 1");
  }
}

int DecoderConfig::num_instances() const {
  if (routing == Routing::kSingle || families.empty()) return 1;
  return *std::max_element(families.begin(), families.end()) + 1;
}

void DecoderConfig::Validate(int num_languages) const {
  if (num_layers < 1) throw ConfigError("decoder needs at least one layer");
  if (model_dim < 1 || hidden_dim < 1) throw ConfigError("decoder dims must be positive");
  if (attention_heads < 1 || model_dim % attention_heads != 0) {
    throw ConfigError(fmt::format("decoder model_dim {} is not divisible by {} heads",
                                  model_dim, attention_heads));
  }
  if (routing == Routing::kPerFamily) {
    if (static_cast<int>(families.size()) != num_languages) {
      throw ConfigError(fmt::format(
          "per-family routing needs a family for each of {} languages, got {}", num_languages,
          families.size()));
    }
    for (int f : families) {
      if (f < 0) throw ConfigError("family ids must be non-negative");
    }
  }
}

void ModelConfig::Validate() const {
  encoder.Validate();
  decoder.Validate(encoder.num_languages);
  if (vocab_size < 5) throw ConfigError("vocab_size must cover the 4 special tokens and one more");
}

namespace {

std::string JoinInts(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<int> SplitInts(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("'{}' is not an integer list", s));
    }
  }
  return out;
}

Ratio ParseRatio(const std::string& s) {
  Ratio r{1, 1};
  const auto slash = s.find('/');
  try {
    r.num = std::stoi(s.substr(0, slash));
    if (slash != std::string::npos) r.den = std::stoi(s.substr(slash + 1));
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("'{}' is not a ratio", s));
  }
  return r;
}

const std::vector<std::string> kKeys = {
    "encoder.num_layers",      "encoder.model_dim",
    "encoder.attention_heads", "encoder.conv_kernel",
    "encoder.ffn_expansion",   "encoder.conditioning",
    "encoder.adapter_bottleneck", "encoder.num_languages",
    "encoder.group_norm_groups",  "encoder.relative_position_attention",
    "decoder.kind",            "decoder.num_layers",
    "decoder.model_dim",       "decoder.hidden_dim",
    "decoder.attention_heads", "decoder.routing",
    "decoder.families",        "model.vocab_size",
};

}  // namespace

KeyValues ModelConfig::ToKeyValues() const {
  KeyValues kv;
  const auto& e = encoder;
  kv.Set("encoder.num_layers", std::to_string(e.num_layers));
  kv.Set("encoder.model_dim", std::to_string(e.model_dim));
  kv.Set("encoder.attention_heads", std::to_string(e.attention_heads));
  kv.Set("encoder.conv_kernel", std::to_string(e.conv_kernel));
  kv.Set("encoder.ffn_expansion", fmt::format("{}/{}", e.ffn_expansion.num, e.ffn_expansion.den));
  kv.Set("encoder.conditioning", ToString(e.conditioning));
  kv.Set("encoder.adapter_bottleneck", std::to_string(e.adapter_bottleneck));
  kv.Set("encoder.num_languages", std::to_string(e.num_languages));
  kv.Set("encoder.group_norm_groups", std::to_string(e.group_norm_groups));
  kv.Set("encoder.relative_position_attention", e.relative_position_attention ? "true" : "false");
  const auto& d = decoder;
  kv.Set("decoder.kind", ToString(d.kind));
  kv.Set("decoder.num_layers", std::to_string(d.num_layers));
  kv.Set("decoder.model_dim", std::to_string(d.model_dim));
  kv.Set("decoder.hidden_dim", std::to_string(d.hidden_dim));
  kv.Set("decoder.attention_heads", std::to_string(d.attention_heads));
  kv.Set("decoder.routing", ToString(d.routing));
  kv.Set("decoder.families", JoinInts(d.families));
  kv.Set("model.vocab_size", std::to_string(vocab_size));
  return kv;
}

ModelConfig ModelConfig::FromKeyValues(const KeyValues& kv) {
  for (const auto& key : kv.UnknownKeys(kKeys)) {
    if (key.starts_with("encoder.") || key.starts_with("decoder.") || key.starts_with("model.")) {
      throw ConfigError(fmt::format("unknown model config key '{}'", key));
    }
  }
  ModelConfig c;
  auto& e = c.encoder;
  e.num_layers = static_cast<int>(kv.GetInt("encoder.num_layers", e.num_layers));
  e.model_dim = static_cast<int>(kv.GetInt("encoder.model_dim", e.model_dim));
  e.attention_heads = static_cast<int>(kv.GetInt("encoder.attention_heads", e.attention_heads));
  e.conv_kernel = static_cast<int>(kv.GetInt("encoder.conv_kernel", e.conv_kernel));
  if (auto r = kv.Get("encoder.ffn_expansion")) e.ffn_expansion = ParseRatio(*r);
  if (auto s = kv.Get("encoder.conditioning")) e.conditioning = ParseConditioning(*s);
  e.adapter_bottleneck =
      static_cast<int>(kv.GetInt("encoder.adapter_bottleneck", e.adapter_bottleneck));
  e.num_languages = static_cast<int>(kv.GetInt("encoder.num_languages", e.num_languages));
  e.group_norm_groups =
      static_cast<int>(kv.GetInt("encoder.group_norm_groups", e.group_norm_groups));
  e.relative_position_attention =
      kv.GetBool("encoder.relative_position_attention", e.relative_position_attention);
  auto& d = c.decoder;
  if (auto s = kv.Get("decoder.kind")) d.kind = ParseDecoderKind(*s);
  d.num_layers = static_cast<int>(kv.GetInt("decoder.num_layers", d.num_layers));
  d.model_dim = static_cast<int>(kv.GetInt("decoder.model_dim", d.model_dim));
  d.hidden_dim = static_cast<int>(kv.GetInt("decoder.hidden_dim", d.hidden_dim));
  d.attention_heads = static_cast<int>(kv.GetInt("decoder.attention_heads", d.attention_heads));
  if (auto s = kv.Get("decoder.routing")) d.routing = ParseRouting(*s);
  if (auto s = kv.Get("decoder.families"); s && !s->empty()) d.families = SplitInts(*s);
  c.vocab_size = static_cast<int>(kv.GetInt("model.vocab_size", c.vocab_size));
  c.Validate();
  return c;
}

}  // namespace mlasr::model
