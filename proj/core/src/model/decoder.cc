#include "mlasr/model/decoder.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mlasr/common/error.h"

namespace mlasr::model {

using nn::Axis;
using nn::Init;
using nn::Shape;

std::vector<double> LogSoftmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double x : logits) total += std::exp(x - peak);
  const double log_z = peak + std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

namespace {

template <typename T>
std::vector<double> LastRowLogProbs(const Tensor<T>& logits) {
  const auto row = logits.row(logits.rows() - 1);
  std::vector<double> wide(row.begin(), row.end());
  return LogSoftmax(wide);
}

void CheckInputs(std::span<const int> inputs, int vocab_size) {
  if (inputs.empty()) throw ShapeError("decoder: empty target sequence");
  for (int id : inputs) {
    if (id < 0 || id >= vocab_size) {
      throw ShapeError(fmt::format("decoder: token id {} outside vocabulary of {}", id, vocab_size));
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- LSTM

template <typename T>
ProjectedLstm<T>::ProjectedLstm(ParameterSet<T>& ps, Rng& rng, const std::string& name,
                                int input_dim, int cell, int output)
    : gates_(ps, rng, name + "/gates", input_dim + output, 4 * cell),
      projection_(ps, rng, name + "/projection", cell, output, /*with_bias=*/false),
      cell_(cell) {}

template <typename T>
typename ProjectedLstm<T>::State ProjectedLstm<T>::operator()(Graph<T>& g,
                                                              const ParameterSet<T>& ps, Var x,
                                                              const State& prev) const {
  const std::size_t c = static_cast<std::size_t>(cell_);
  const Var z = gates_(g, ps, nn::Concat(g, {x, prev.h}, Axis::kCols));
  const Var in_gate = nn::Sigmoid(g, nn::Slice(g, z, Axis::kCols, 0, c));
  const Var forget_gate = nn::Sigmoid(g, nn::Slice(g, z, Axis::kCols, c, 2 * c));
  const Var candidate = nn::Tanh(g, nn::Slice(g, z, Axis::kCols, 2 * c, 3 * c));
  const Var out_gate = nn::Sigmoid(g, nn::Slice(g, z, Axis::kCols, 3 * c, 4 * c));
  const Var cell = nn::Add(g, nn::Mul(g, forget_gate, prev.c), nn::Mul(g, in_gate, candidate));
  const Var h = projection_(g, ps, nn::Mul(g, out_gate, nn::Tanh(g, cell)));
  return State{h, cell};
}

// ---------------------------------------------------------------- attention

template <typename T>
AdditiveAttention<T>::AdditiveAttention(ParameterSet<T>& ps, Rng& rng, const std::string& name,
                                        int memory_dim, int dim, int heads)
    : key_(ps, rng, name + "/key", memory_dim, dim),
      query_(ps, rng, name + "/query", dim, dim, /*with_bias=*/false),
      value_(ps, rng, name + "/value", memory_dim, dim),
      dim_(dim),
      heads_(heads) {
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError(fmt::format("{}: width {} not divisible by {} heads", name, dim, heads));
  }
  score_ = ps.Declare(name + "/score", Shape{std::size_t(dim), 1}, Init::kGlorotUniform, rng);
}

template <typename T>
typename AdditiveAttention<T>::Memory AdditiveAttention<T>::Prepare(Graph<T>& g,
                                                                   const ParameterSet<T>& ps,
                                                                   Var encoder_out) const {
  if (g.value(encoder_out).rows() == 0) throw ShapeError("attention: empty encoder output");
  return Memory{key_(g, ps, encoder_out), value_(g, ps, encoder_out)};
}

template <typename T>
typename AdditiveAttention<T>::Result AdditiveAttention<T>::operator()(
    Graph<T>& g, const ParameterSet<T>& ps, const Memory& memory, Var query) const {
  const std::size_t frames = g.value(memory.keys).rows();
  const std::size_t dh = static_cast<std::size_t>(dim_ / heads_);
  const Var q = query_(g, ps, query);
  const Var score = g.Param(ps, score_);
  Result result;
  std::vector<Var> contexts;
  for (std::size_t h = 0; h < static_cast<std::size_t>(heads_); ++h) {
    const std::size_t b = h * dh, e = b + dh;
    const auto cols = [&](Var x) { return heads_ == 1 ? x : nn::Slice(g, x, Axis::kCols, b, e); };
    const Var v_h = heads_ == 1 ? score : nn::Slice(g, score, Axis::kRows, b, e);
    const Var hidden = nn::Tanh(g, nn::AddBias(g, cols(memory.keys), cols(q)));
    const Var energies = nn::Reshape(g, nn::MatMul(g, hidden, v_h), Shape{1, frames});
    const Var weights = nn::Softmax(g, energies);
    result.weights.push_back(weights);
    contexts.push_back(nn::MatMul(g, weights, cols(memory.values)));
  }
  result.context = contexts.size() == 1 ? contexts[0] : nn::Concat(g, contexts, Axis::kCols);
  return result;
}

// ---------------------------------------------------------------- LAS

template <typename T>
LasDecoder<T>::LasDecoder(const DecoderConfig& config, int encoder_dim, int vocab_size,
                          ParameterSet<T>& ps, Rng& rng, const std::string& name)
    : config_(config), vocab_size_(vocab_size) {
  const int p = config.model_dim, c = config.hidden_dim;
  embedding_ = ps.Declare(name + "/embedding", Shape{std::size_t(vocab_size), std::size_t(p)},
                          Init::kNormalSmall, rng);
  for (int l = 0; l < config.num_layers; ++l) {
    // The first layer also sees the previous attention context.
    const int input_dim = l == 0 ? 2 * p : p;
    lstm_.emplace_back(ps, rng, fmt::format("{}/lstm{}", name, l), input_dim, c, p);
  }
  attention_ = AdditiveAttention<T>(ps, rng, name + "/attention", encoder_dim, p,
                                    config.attention_heads);
  output_ = Linear<T>(ps, rng, name + "/output", 2 * p, vocab_size);
}

template <typename T>
typename LasDecoder<T>::State LasDecoder<T>::InitialState(Graph<T>& g) const {
  const std::size_t p = config_.model_dim, c = config_.hidden_dim;
  State s;
  for (int l = 0; l < config_.num_layers; ++l) {
    s.layers.push_back({g.Constant(Tensor<T>({1, p})), g.Constant(Tensor<T>({1, c}))});
  }
  s.context = g.Constant(Tensor<T>({1, p}));
  return s;
}

template <typename T>
typename AdditiveAttention<T>::Memory LasDecoder<T>::Prepare(Graph<T>& g,
                                                            const ParameterSet<T>& ps,
                                                            Var encoder_out) const {
  return attention_.Prepare(g, ps, encoder_out);
}

template <typename T>
typename LasDecoder<T>::StepOutput LasDecoder<T>::Step(
    Graph<T>& g, const ParameterSet<T>& ps, const typename AdditiveAttention<T>::Memory& memory,
    int prev_token, const State& state) const {
  if (state.layers.size() != lstm_.size()) {
    throw ShapeError(fmt::format("las_step: state has {} layers, decoder has {}",
                                 state.layers.size(), lstm_.size()));
  }
  const int ids[] = {prev_token};
  CheckInputs(ids, vocab_size_);
  StepOutput out;
  Var x = nn::Concat(g, {nn::Embedding<T>(g, g.Param(ps, embedding_), ids), state.context},
                     Axis::kCols);
  for (std::size_t l = 0; l < lstm_.size(); ++l) {
    out.state.layers.push_back(lstm_[l](g, ps, x, state.layers[l]));
    x = out.state.layers.back().h;
  }
  auto attended = attention_(g, ps, memory, x);
  out.state.context = attended.context;
  out.attention = std::move(attended.weights);
  out.logits = output_(g, ps, nn::Concat(g, {x, attended.context}, Axis::kCols));
  return out;
}

template <typename T>
Var LasDecoder<T>::Logits(Graph<T>& g, const ParameterSet<T>& ps, Var encoder_out,
                          std::span<const int> inputs) const {
  CheckInputs(inputs, vocab_size_);
  const auto memory = Prepare(g, ps, encoder_out);
  State state = InitialState(g);
  std::vector<Var> rows;
  for (int token : inputs) {
    StepOutput step = Step(g, ps, memory, token, state);
    rows.push_back(step.logits);
    state = std::move(step.state);
  }
  return rows.size() == 1 ? rows[0] : nn::Concat(g, rows, Axis::kRows);
}

namespace {

// Caches the decoder state reached after each scored prefix, so extending a
// hypothesis by one token costs a single step.
template <typename T>
class LasScorer final : public StepScorer {
 public:
  LasScorer(const LasDecoder<T>& decoder, const ParameterSet<T>& ps, const Tensor<T>& encoder_out)
      : decoder_(decoder), ps_(ps) {
    Graph<T> g;
    const auto memory = decoder.Prepare(g, ps, g.Constant(encoder_out));
    keys_ = g.value(memory.keys);
    values_ = g.value(memory.values);
    const auto init = decoder.InitialState(g);
    initial_ = Capture(g, init);
  }

  std::vector<double> NextLogProbs(std::span<const int> prefix) override {
    if (prefix.empty()) throw UsageError("scorer: prefix must start with the begin id");
    std::vector<int> key(prefix.begin(), prefix.end());
    if (auto it = cache_.find(key); it != cache_.end()) return it->second.log_probs;
    const Snapshot* parent = &initial_;
    if (prefix.size() > 1) {
      NextLogProbs(prefix.first(prefix.size() - 1));
      parent = &cache_.at(std::vector<int>(prefix.begin(), prefix.end() - 1)).state;
    }
    Graph<T> g;
    const typename AdditiveAttention<T>::Memory memory{g.Constant(keys_), g.Constant(values_)};
    typename LasDecoder<T>::State state;
    for (std::size_t l = 0; l < parent->h.size(); ++l) {
      state.layers.push_back({g.Constant(parent->h[l]), g.Constant(parent->c[l])});
    }
    state.context = g.Constant(parent->context);
    const auto step = decoder_.Step(g, ps_, memory, prefix.back(), state);
    Entry entry{Capture(g, step.state), LastRowLogProbs(g.value(step.logits))};
    return cache_.emplace(std::move(key), std::move(entry)).first->second.log_probs;
  }

 private:
  struct Snapshot {
    std::vector<Tensor<T>> h, c;
    Tensor<T> context;
  };
  struct Entry {
    Snapshot state;
    std::vector<double> log_probs;
  };

  static Snapshot Capture(const Graph<T>& g, const typename LasDecoder<T>::State& s) {
    Snapshot snap;
    for (const auto& layer : s.layers) {
      snap.h.push_back(g.value(layer.h));
      snap.c.push_back(g.value(layer.c));
    }
    snap.context = g.value(s.context);
    return snap;
  }

  const LasDecoder<T>& decoder_;
  const ParameterSet<T>& ps_;
  Tensor<T> keys_, values_;
  Snapshot initial_;
  std::map<std::vector<int>, Entry> cache_;
};

template <typename T>
class TransformerScorer final : public StepScorer {
 public:
  TransformerScorer(const TransformerDecoder<T>& decoder, const ParameterSet<T>& ps,
                    const Tensor<T>& encoder_out)
      : decoder_(decoder), ps_(ps), encoder_out_(encoder_out) {}

  std::vector<double> NextLogProbs(std::span<const int> prefix) override {
    Graph<T> g;
    const Var logits = decoder_.Logits(g, ps_, g.Constant(encoder_out_), prefix);
    return LastRowLogProbs(g.value(logits));
  }

 private:
  const TransformerDecoder<T>& decoder_;
  const ParameterSet<T>& ps_;
  Tensor<T> encoder_out_;
};

}  // namespace

template <typename T>
std::unique_ptr<StepScorer> LasDecoder<T>::Scorer(const ParameterSet<T>& ps,
                                                  const Tensor<T>& encoder_out) const {
  return std::make_unique<LasScorer<T>>(*this, ps, encoder_out);
}

// ---------------------------------------------------------------- Transformer

template <typename T>
TransformerDecoderLayer<T>::TransformerDecoderLayer(ParameterSet<T>& ps, Rng& rng,
                                                    const std::string& name, int dim,
                                                    int encoder_dim, int hidden, int heads)
    : self_norm_(ps, rng, name + "/self_norm", dim),
      self_attention_(ps, rng, name + "/self_attention", dim, dim, dim, heads, false),
      cross_norm_(ps, rng, name + "/cross_norm", dim),
      cross_attention_(ps, rng, name + "/cross_attention", dim, encoder_dim, dim, heads, false),
      ffn_(ps, rng, name + "/ffn", dim, hidden, Activation::kRelu) {}

template <typename T>
Var TransformerDecoderLayer<T>::operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x,
                                           Var encoder_out) const {
  const Var normed = self_norm_(g, ps, x);
  x = nn::Add(g, x, self_attention_(g, ps, normed, normed, /*causal=*/true));
  x = nn::Add(g, x, cross_attention_(g, ps, cross_norm_(g, ps, x), encoder_out, false));
  return nn::Add(g, x, ffn_(g, ps, x));
}

template <typename T>
TransformerDecoder<T>::TransformerDecoder(const DecoderConfig& config, int encoder_dim,
                                          int vocab_size, ParameterSet<T>& ps, Rng& rng,
                                          const std::string& name)
    : config_(config), vocab_size_(vocab_size) {
  const int d = config.model_dim;
  embedding_ = ps.Declare(name + "/embedding", Shape{std::size_t(vocab_size), std::size_t(d)},
                          Init::kNormalSmall, rng);
  for (int l = 0; l < config.num_layers; ++l) {
    layers_.emplace_back(ps, rng, fmt::format("{}/layer{}", name, l), d, encoder_dim,
                         config.hidden_dim, config.attention_heads);
  }
  final_norm_ = Norm<T>(ps, rng, name + "/final_norm", d);
  output_ = Linear<T>(ps, rng, name + "/output", d, vocab_size);
}

template <typename T>
Var TransformerDecoder<T>::Logits(Graph<T>& g, const ParameterSet<T>& ps, Var encoder_out,
                                  std::span<const int> inputs) const {
  CheckInputs(inputs, vocab_size_);
  const int d = config_.model_dim;
  Var x = nn::Scale(g, nn::Embedding<T>(g, g.Param(ps, embedding_), inputs),
                    std::sqrt(static_cast<double>(d)));
  x = nn::Add(g, x, g.Constant(SinusoidTable<T>(0, 1, static_cast<int>(inputs.size()), d)));
  for (const auto& layer : layers_) x = layer(g, ps, x, encoder_out);
  return output_(g, ps, final_norm_(g, ps, x));
}

template <typename T>
std::unique_ptr<StepScorer> TransformerDecoder<T>::Scorer(const ParameterSet<T>& ps,
                                                          const Tensor<T>& encoder_out) const {
  return std::make_unique<TransformerScorer<T>>(*this, ps, encoder_out);
}

template <typename T>
std::unique_ptr<Decoder<T>> MakeDecoder(const DecoderConfig& config, int encoder_dim,
                                        int vocab_size, ParameterSet<T>& ps, Rng& rng,
                                        const std::string& name) {
  if (config.kind == DecoderKind::kLas) {
    return std::make_unique<LasDecoder<T>>(config, encoder_dim, vocab_size, ps, rng, name);
  }
  return std::make_unique<TransformerDecoder<T>>(config, encoder_dim, vocab_size, ps, rng, name);
}

#define MLASR_INSTANTIATE(T)                                                              \
  template class ProjectedLstm<T>;                                                        \
  template class AdditiveAttention<T>;                                                    \
  template class LasDecoder<T>;                                                           \
  template class TransformerDecoderLayer<T>;                                              \
  template class TransformerDecoder<T>;                                                   \
  template std::unique_ptr<Decoder<T>> MakeDecoder<T>(const DecoderConfig&, int, int,     \
                                                      ParameterSet<T>&, Rng&, const std::string&);

MLASR_INSTANTIATE(float)
MLASR_INSTANTIATE(double)

#undef MLASR_INSTANTIATE

}  // namespace mlasr::model
