#pragma once

#include <string>

#include "mlasr/common/random.h"
#include "mlasr/nn/ops.h"

// Reusable sub-layers. Each holds ParamIds into a ParameterSet it declared its
// tensors in, and evaluates on a Graph against that same set.
namespace mlasr::model {

using nn::Graph;
using nn::ParameterSet;
using nn::ParamId;
using nn::Tensor;
using nn::Var;

// Rows hold sinusoidal encodings of positions first, first+step, ...
template <typename T>
Tensor<T> SinusoidTable(int first_position, int step, int count, int dim);

// Additive attention mask: 0 on and below the diagonal, -1e9 above it.
template <typename T>
Tensor<T> CausalMask(int steps);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<T>& ps, Rng& rng, const std::string& name, int in, int out,
         bool with_bias = true, nn::Init init = nn::Init::kGlorotUniform);

  Var operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x) const;

  ParamId weight() const { return weight_; }
  ParamId bias() const { return bias_; }
  bool has_bias() const { return has_bias_; }

 private:
  ParamId weight_ = 0;
  ParamId bias_ = 0;
  bool has_bias_ = false;
};

template <typename T>
class Norm {
 public:
  Norm() = default;
  Norm(ParameterSet<T>& ps, Rng& rng, const std::string& name, int dim);

  Var operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x) const;
  Var Grouped(Graph<T>& g, const ParameterSet<T>& ps, Var x, int groups) const;

 private:
  ParamId gamma_ = 0;
  ParamId beta_ = 0;
};

enum class Activation { kSwish, kRelu };

// norm -> linear(dim, hidden) -> activation -> linear(hidden, dim); no residual.
template <typename T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterSet<T>& ps, Rng& rng, const std::string& name, int dim, int hidden,
              Activation act);

  Var operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x) const;

 private:
  Norm<T> norm_;
  Linear<T> up_;
  Linear<T> down_;
  Activation act_ = Activation::kSwish;
};

// Scaled dot-product attention with per-head projections. With `relative`
// set, scores gain a learned term over sinusoidal relative offsets plus
// per-head content and position biases (query and memory must coincide).
template <typename T>
class DotAttention {
 public:
  DotAttention() = default;
  DotAttention(ParameterSet<T>& ps, Rng& rng, const std::string& name, int query_dim,
               int memory_dim, int dim, int heads, bool relative);

  // query: Tq x query_dim, memory: Tk x memory_dim -> Tq x dim.
  Var operator()(Graph<T>& g, const ParameterSet<T>& ps, Var query, Var memory,
                 bool causal) const;

 private:
  Linear<T> wq_, wk_, wv_, wo_, wpos_;
  ParamId pos_bias_u_ = 0;
  ParamId pos_bias_v_ = 0;
  int dim_ = 0;
  int heads_ = 1;
  bool relative_ = false;
};

// norm -> pointwise(D, 2D) -> GLU -> depthwise conv -> group norm -> swish ->
// pointwise(D, D); no residual.
template <typename T>
class ConvModule {
 public:
  ConvModule() = default;
  ConvModule(ParameterSet<T>& ps, Rng& rng, const std::string& name, int dim, int kernel,
             int groups);

  Var operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x) const;

 private:
  Norm<T> norm_;
  Linear<T> pointwise_in_;
  ParamId depthwise_kernel_ = 0;
  ParamId depthwise_bias_ = 0;
  Norm<T> group_norm_;
  Linear<T> pointwise_out_;
  int groups_ = 1;
};

struct ConformerShape {
  int dim = 0;
  int heads = 1;
  int kernel = 15;
  int ffn_hidden = 0;
  int groups = 1;
  bool relative = true;
};

// x + ½FFN -> + MHSA -> + conv -> + ½FFN -> layer norm.
template <typename T>
class ConformerLayer {
 public:
  ConformerLayer() = default;
  ConformerLayer(ParameterSet<T>& ps, Rng& rng, const std::string& name,
                 const ConformerShape& shape);

  Var operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x) const;

 private:
  FeedForward<T> ffn_in_;
  Norm<T> attention_norm_;
  DotAttention<T> attention_;
  ConvModule<T> conv_;
  FeedForward<T> ffn_out_;
  Norm<T> final_norm_;
};

// x + up(relu(down(norm(x)))); up starts at zero so a fresh adapter is the
// identity.
template <typename T>
class Adapter {
 public:
  Adapter() = default;
  Adapter(ParameterSet<T>& ps, Rng& rng, const std::string& name, int dim, int bottleneck);

  Var operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x) const;

 private:
  Norm<T> norm_;
  Linear<T> down_;
  Linear<T> up_;
};

// Pads a zero frame on the left when T is odd, then concatenates consecutive
// frame pairs: T x D -> ceil(T/2) x 2D.
template <typename T>
Var TimeStack(Graph<T>& g, Var x);

}  // namespace mlasr::model
