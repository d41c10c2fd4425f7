#pragma once

#include <string>
#include <vector>

#include "mlasr/common/key_value.h"

namespace mlasr::model {

enum class Conditioning { kNone, kBiasConcat, kPerLanguageAdapter, kSharedAdapter };
enum class DecoderKind { kLas, kTransformer };
enum class Routing { kSingle, kPerFamily };

std::string ToString(Conditioning c);
std::string ToString(DecoderKind k);
std::string ToString(Routing r);
Conditioning ParseConditioning(const std::string& s);
DecoderKind ParseDecoderKind(const std::string& s);
Routing ParseRouting(const std::string& s);

// Width of the stacked acoustic features consumed by the encoder.
inline constexpr int kAcousticDim = 240;

struct Ratio {
  int num = 4;
  int den = 1;
  bool operator==(const Ratio&) const = default;
};

struct EncoderConfig {
  int num_layers = 17;
  int model_dim = 512;
  int attention_heads = 8;
  int conv_kernel = 15;
  Ratio ffn_expansion{4, 1};
  Conditioning conditioning = Conditioning::kNone;
  int adapter_bottleneck = 0;  // 0 means model_dim / 4
  int num_languages = 1;
  int group_norm_groups = 1;
  bool relative_position_attention = true;

  int ffn_hidden(int dim) const { return dim * ffn_expansion.num / ffn_expansion.den; }
  int bottleneck() const { return adapter_bottleneck > 0 ? adapter_bottleneck : model_dim / 4; }
  int input_dim() const {
    return kAcousticDim + (conditioning == Conditioning::kBiasConcat ? num_languages : 0);
  }
  bool has_adapters() const {
    return conditioning == Conditioning::kPerLanguageAdapter ||
           conditioning == Conditioning::kSharedAdapter;
  }
  // Adapter entries per layer: one per language, or one shared.
  int adapter_entries() const {
    if (!has_adapters()) return 0;
    return conditioning == Conditioning::kSharedAdapter ? 1 : num_languages;
  }

  void Validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct DecoderConfig {
  DecoderKind kind = DecoderKind::kLas;
  int num_layers = 2;
  // LAS: LSTM output (projection) width. Transformer: model width.
  int model_dim = 640;
  // LAS: LSTM cell width. Transformer: feed-forward width.
  int hidden_dim = 2048;
  int attention_heads = 4;
  Routing routing = Routing::kSingle;
  // language id -> family id; required for per-family routing.
  std::vector<int> families;

  int num_instances() const;
  void Validate(int num_languages) const;
  bool operator==(const DecoderConfig&) const = default;
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  int vocab_size = 128;

  int num_languages() const { return encoder.num_languages; }
  void Validate() const;

  KeyValues ToKeyValues() const;
  // Keys absent from kv keep their defaults; unknown "encoder."/"decoder."
  // keys are rejected.
  static ModelConfig FromKeyValues(const KeyValues& kv);
  std::string Serialize() const { return ToKeyValues().Serialize(); }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace mlasr::model
