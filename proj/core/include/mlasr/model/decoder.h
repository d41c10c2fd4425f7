#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mlasr/model/beam_search.h"
#include "mlasr/model/config.h"
#include "mlasr/model/layers.h"

namespace mlasr::model {

template <typename T>
class Decoder {
 public:
  virtual ~Decoder() = default;

  // Teacher-forced logits: inputs [begin, y1, .., y(U-1)] -> U x vocab.
  virtual Var Logits(Graph<T>& g, const ParameterSet<T>& ps, Var encoder_out,
                     std::span<const int> inputs) const = 0;

  // Incremental scorer over a fixed encoder output for beam search. The
  // scorer keeps references to ps, which must outlive it.
  virtual std::unique_ptr<StepScorer> Scorer(const ParameterSet<T>& ps,
                                             const Tensor<T>& encoder_out) const = 0;
};

// LSTM with a linear output projection: cell width C, output width P.
template <typename T>
class ProjectedLstm {
 public:
  ProjectedLstm() = default;
  ProjectedLstm(ParameterSet<T>& ps, Rng& rng, const std::string& name, int input_dim, int cell,
                int output);

  struct State {
    Var h;  // 1 x P
    Var c;  // 1 x C
  };
  State operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x, const State& prev) const;

 private:
  Linear<T> gates_;
  Linear<T> projection_;
  int cell_ = 0;
};

// Per-head additive scoring v_h . tanh(K_h[t] + q_h), softmax over frames.
template <typename T>
class AdditiveAttention {
 public:
  AdditiveAttention() = default;
  AdditiveAttention(ParameterSet<T>& ps, Rng& rng, const std::string& name, int memory_dim,
                    int dim, int heads);

  struct Memory {
    Var keys;    // T x P
    Var values;  // T x P
  };
  Memory Prepare(Graph<T>& g, const ParameterSet<T>& ps, Var encoder_out) const;

  struct Result {
    Var context;                 // 1 x P
    std::vector<Var> weights;    // per head, 1 x T
  };
  Result operator()(Graph<T>& g, const ParameterSet<T>& ps, const Memory& memory,
                    Var query) const;

 private:
  Linear<T> key_, query_, value_;
  ParamId score_ = 0;  // P x 1, split into heads
  int dim_ = 0;
  int heads_ = 1;
};

template <typename T>
class LasDecoder final : public Decoder<T> {
 public:
  LasDecoder(const DecoderConfig& config, int encoder_dim, int vocab_size, ParameterSet<T>& ps,
             Rng& rng, const std::string& name);

  struct State {
    std::vector<typename ProjectedLstm<T>::State> layers;
    Var context;  // 1 x P
  };
  struct StepOutput {
    Var logits;  // 1 x vocab
    State state;
    std::vector<Var> attention;  // per head, 1 x T
  };

  State InitialState(Graph<T>& g) const;
  typename AdditiveAttention<T>::Memory Prepare(Graph<T>& g, const ParameterSet<T>& ps,
                                                Var encoder_out) const;
  StepOutput Step(Graph<T>& g, const ParameterSet<T>& ps,
                  const typename AdditiveAttention<T>::Memory& memory, int prev_token,
                  const State& state) const;

  Var Logits(Graph<T>& g, const ParameterSet<T>& ps, Var encoder_out,
             std::span<const int> inputs) const override;
  std::unique_ptr<StepScorer> Scorer(const ParameterSet<T>& ps,
                                     const Tensor<T>& encoder_out) const override;

  const DecoderConfig& config() const { return config_; }

 private:
  DecoderConfig config_;
  int vocab_size_ = 0;
  ParamId embedding_ = 0;
  std::vector<ProjectedLstm<T>> lstm_;
  AdditiveAttention<T> attention_;
  Linear<T> output_;
};

template <typename T>
class TransformerDecoderLayer {
 public:
  TransformerDecoderLayer() = default;
  TransformerDecoderLayer(ParameterSet<T>& ps, Rng& rng, const std::string& name, int dim,
                          int encoder_dim, int hidden, int heads);

  Var operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x, Var encoder_out) const;

 private:
  Norm<T> self_norm_;
  DotAttention<T> self_attention_;
  Norm<T> cross_norm_;
  DotAttention<T> cross_attention_;
  FeedForward<T> ffn_;
};

template <typename T>
class TransformerDecoder final : public Decoder<T> {
 public:
  TransformerDecoder(const DecoderConfig& config, int encoder_dim, int vocab_size,
                     ParameterSet<T>& ps, Rng& rng, const std::string& name);

  Var Logits(Graph<T>& g, const ParameterSet<T>& ps, Var encoder_out,
             std::span<const int> inputs) const override;
  std::unique_ptr<StepScorer> Scorer(const ParameterSet<T>& ps,
                                     const Tensor<T>& encoder_out) const override;

  const DecoderConfig& config() const { return config_; }

 private:
  DecoderConfig config_;
  int vocab_size_ = 0;
  ParamId embedding_ = 0;
  std::vector<TransformerDecoderLayer<T>> layers_;
  Norm<T> final_norm_;
  Linear<T> output_;
};

template <typename T>
std::unique_ptr<Decoder<T>> MakeDecoder(const DecoderConfig& config, int encoder_dim,
                                        int vocab_size, ParameterSet<T>& ps, Rng& rng,
                                        const std::string& name);

// log softmax of one row, in double.
std::vector<double> LogSoftmax(std::span<const double> logits);

}  // namespace mlasr::model
