#include "mlasr/model/layers.h"

#include <cmath>

#include <fmt/format.h>

#include "mlasr/common/error.h"

namespace mlasr::model {

using nn::Axis;
using nn::Init;
using nn::Shape;

template <typename T>
Tensor<T> SinusoidTable(int first_position, int step, int count, int dim) {
  Tensor<T> out({static_cast<std::size_t>(count), static_cast<std::size_t>(dim)});
  for (int r = 0; r < count; ++r) {
    const double pos = first_position + static_cast<double>(r) * step;
    for (int c = 0; c < dim; c += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(c) / dim);
      out(r, c) = static_cast<T>(std::sin(pos * freq));
      if (c + 1 < dim) out(r, c + 1) = static_cast<T>(std::cos(pos * freq));
    }
  }
  return out;
}

template <typename T>
Tensor<T> CausalMask(int steps) {
  const auto n = static_cast<std::size_t>(steps);
  Tensor<T> mask({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) mask(i, j) = static_cast<T>(-1e9);
  }
  return mask;
}

template <typename T>
Linear<T>::Linear(ParameterSet<T>& ps, Rng& rng, const std::string& name, int in, int out,
                  bool with_bias, Init init)
    : has_bias_(with_bias) {
  weight_ = ps.Declare(name + "/w", Shape{std::size_t(in), std::size_t(out)}, init, rng);
  if (with_bias) bias_ = ps.Declare(name + "/b", Shape{std::size_t(out)}, Init::kZeros, rng);
}

template <typename T>
Var Linear<T>::operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x) const {
  Var y = nn::MatMul(g, x, g.Param(ps, weight_));
  return has_bias_ ? nn::AddBias(g, y, g.Param(ps, bias_)) : y;
}

template <typename T>
Norm<T>::Norm(ParameterSet<T>& ps, Rng& rng, const std::string& name, int dim) {
  gamma_ = ps.Declare(name + "/gamma", Shape{std::size_t(dim)}, Init::kOnes, rng);
  beta_ = ps.Declare(name + "/beta", Shape{std::size_t(dim)}, Init::kZeros, rng);
}

template <typename T>
Var Norm<T>::operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x) const {
  return nn::LayerNorm(g, x, g.Param(ps, gamma_), g.Param(ps, beta_));
}

template <typename T>
Var Norm<T>::Grouped(Graph<T>& g, const ParameterSet<T>& ps, Var x, int groups) const {
  return nn::GroupNorm(g, x, g.Param(ps, gamma_), g.Param(ps, beta_),
                       static_cast<std::size_t>(groups));
}

template <typename T>
FeedForward<T>::FeedForward(ParameterSet<T>& ps, Rng& rng, const std::string& name, int dim,
                            int hidden, Activation act)
    : norm_(ps, rng, name + "/norm", dim),
      up_(ps, rng, name + "/up", dim, hidden),
      down_(ps, rng, name + "/down", hidden, dim),
      act_(act) {}

template <typename T>
Var FeedForward<T>::operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x) const {
  Var h = up_(g, ps, norm_(g, ps, x));
  h = act_ == Activation::kSwish ? nn::Swish(g, h) : nn::Relu(g, h);
  return down_(g, ps, h);
}

template <typename T>
DotAttention<T>::DotAttention(ParameterSet<T>& ps, Rng& rng, const std::string& name,
                              int query_dim, int memory_dim, int dim, int heads, bool relative)
    : wq_(ps, rng, name + "/query", query_dim, dim),
      wk_(ps, rng, name + "/key", memory_dim, dim, /*with_bias=*/false),
      wv_(ps, rng, name + "/value", memory_dim, dim),
      wo_(ps, rng, name + "/output", dim, dim),
      dim_(dim),
      heads_(heads),
      relative_(relative) {
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError(fmt::format("{}: width {} not divisible by {} heads", name, dim, heads));
  }
  if (relative) {
    wpos_ = Linear<T>(ps, rng, name + "/position", dim, dim, /*with_bias=*/false);
    pos_bias_u_ = ps.Declare(name + "/content_bias", Shape{std::size_t(dim)}, Init::kZeros, rng);
    pos_bias_v_ = ps.Declare(name + "/position_bias", Shape{std::size_t(dim)}, Init::kZeros, rng);
  }
}

template <typename T>
Var DotAttention<T>::operator()(Graph<T>& g, const ParameterSet<T>& ps, Var query, Var memory,
                                bool causal) const {
  const std::size_t tq = g.value(query).rows();
  const std::size_t tk = g.value(memory).rows();
  if ((relative_ || causal) && tq != tk) {
    throw ShapeError(fmt::format("attention: {} queries against {} keys needs equal lengths",
                                 tq, tk));
  }
  const Var q = wq_(g, ps, query);
  const Var k = wk_(g, ps, memory);
  const Var v = wv_(g, ps, memory);
  Var q_content = q, q_position, p;
  if (relative_) {
    const int t = static_cast<int>(tq);
    p = wpos_(g, ps, g.Constant(SinusoidTable<T>(t - 1, -1, 2 * t - 1, dim_)));
    q_content = nn::AddBias(g, q, g.Param(ps, pos_bias_u_));
    q_position = nn::AddBias(g, q, g.Param(ps, pos_bias_v_));
  }
  const Var mask = causal ? g.Constant(CausalMask<T>(static_cast<int>(tq))) : Var{};
  const std::size_t dh = static_cast<std::size_t>(dim_ / heads_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> contexts;
  contexts.reserve(heads_);
  for (std::size_t h = 0; h < static_cast<std::size_t>(heads_); ++h) {
    const std::size_t b = h * dh, e = b + dh;
    const auto head = [&](Var x) { return heads_ == 1 ? x : nn::Slice(g, x, Axis::kCols, b, e); };
    Var scores = nn::MatMul(g, head(q_content), head(k), /*transpose_b=*/true);
    if (relative_) {
      const Var rel = nn::MatMul(g, head(q_position), head(p), /*transpose_b=*/true);
      scores = nn::Add(g, scores, nn::RelShift(g, rel));
    }
    scores = nn::Scale(g, scores, scale);
    if (causal) scores = nn::Add(g, scores, mask);
    contexts.push_back(nn::MatMul(g, nn::Softmax(g, scores), head(v)));
  }
  const Var ctx = contexts.size() == 1 ? contexts[0] : nn::Concat(g, contexts, Axis::kCols);
  return wo_(g, ps, ctx);
}

template <typename T>
ConvModule<T>::ConvModule(ParameterSet<T>& ps, Rng& rng, const std::string& name, int dim,
                          int kernel, int groups)
    : norm_(ps, rng, name + "/norm", dim),
      pointwise_in_(ps, rng, name + "/pointwise_in", dim, 2 * dim),
      group_norm_(),
      groups_(groups) {
  depthwise_kernel_ = ps.Declare(name + "/depthwise/w",
                                 Shape{std::size_t(kernel), std::size_t(dim)},
                                 Init::kGlorotUniform, rng);
  depthwise_bias_ = ps.Declare(name + "/depthwise/b", Shape{std::size_t(dim)}, Init::kZeros, rng);
  group_norm_ = Norm<T>(ps, rng, name + "/group_norm", dim);
  pointwise_out_ = Linear<T>(ps, rng, name + "/pointwise_out", dim, dim);
}

template <typename T>
Var ConvModule<T>::operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x) const {
  const std::size_t dim = g.value(x).cols();
  Var y = pointwise_in_(g, ps, norm_(g, ps, x));
  y = nn::Mul(g, nn::Slice(g, y, Axis::kCols, 0, dim),
              nn::Sigmoid(g, nn::Slice(g, y, Axis::kCols, dim, 2 * dim)));
  y = nn::DepthwiseConv1d(g, y, g.Param(ps, depthwise_kernel_));
  y = nn::AddBias(g, y, g.Param(ps, depthwise_bias_));
  y = nn::Swish(g, group_norm_.Grouped(g, ps, y, groups_));
  return pointwise_out_(g, ps, y);
}

template <typename T>
ConformerLayer<T>::ConformerLayer(ParameterSet<T>& ps, Rng& rng, const std::string& name,
                                  const ConformerShape& s)
    : ffn_in_(ps, rng, name + "/ffn_in", s.dim, s.ffn_hidden, Activation::kSwish),
      attention_norm_(ps, rng, name + "/attention_norm", s.dim),
      attention_(ps, rng, name + "/attention", s.dim, s.dim, s.dim, s.heads, s.relative),
      conv_(ps, rng, name + "/conv", s.dim, s.kernel, s.groups),
      ffn_out_(ps, rng, name + "/ffn_out", s.dim, s.ffn_hidden, Activation::kSwish),
      final_norm_(ps, rng, name + "/final_norm", s.dim) {}

template <typename T>
Var ConformerLayer<T>::operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x) const {
  x = nn::Add(g, x, nn::Scale(g, ffn_in_(g, ps, x), 0.5));
  const Var normed = attention_norm_(g, ps, x);
  x = nn::Add(g, x, attention_(g, ps, normed, normed, /*causal=*/false));
  x = nn::Add(g, x, conv_(g, ps, x));
  x = nn::Add(g, x, nn::Scale(g, ffn_out_(g, ps, x), 0.5));
  return final_norm_(g, ps, x);
}

template <typename T>
Adapter<T>::Adapter(ParameterSet<T>& ps, Rng& rng, const std::string& name, int dim,
                    int bottleneck)
    : norm_(ps, rng, name + "/norm", dim),
      down_(ps, rng, name + "/down", dim, bottleneck),
      up_(ps, rng, name + "/up", bottleneck, dim, /*with_bias=*/true, Init::kZeros) {}

template <typename T>
Var Adapter<T>::operator()(Graph<T>& g, const ParameterSet<T>& ps, Var x) const {
  const Var h = up_(g, ps, nn::Relu(g, down_(g, ps, norm_(g, ps, x))));
  return nn::Add(g, x, h);
}

template <typename T>
Var TimeStack(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  const std::size_t steps = xv.rows(), dim = xv.cols();
  if (steps == 0) throw ShapeError("time_stack: empty sequence");
  Var padded = x;
  if (steps % 2 == 1) {
    padded = nn::Concat(g, {g.Constant(Tensor<T>({1, dim})), x}, Axis::kRows);
  }
  const std::size_t out_steps = (steps + 1) / 2;
  return nn::Reshape(g, padded, Shape{out_steps, 2 * dim});
}

#define MLASR_INSTANTIATE(T)                                              \
  template Tensor<T> SinusoidTable<T>(int, int, int, int);                \
  template Tensor<T> CausalMask<T>(int);                                  \
  template class Linear<T>;                                               \
  template class Norm<T>;                                                 \
  template class FeedForward<T>;                                          \
  template class DotAttention<T>;                                         \
  template class ConvModule<T>;                                           \
  template class ConformerLayer<T>;                                       \
  template class Adapter<T>;                                              \
  template Var TimeStack<T>(Graph<T>&, Var);

MLASR_INSTANTIATE(float)
MLASR_INSTANTIATE(double)

#undef MLASR_INSTANTIATE

}  // namespace mlasr::model
