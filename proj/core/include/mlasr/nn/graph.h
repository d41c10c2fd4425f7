#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mlasr/nn/parameters.h"
#include "mlasr/nn/tensor.h"

namespace mlasr::nn {

// Handle to a value recorded on a Graph.
struct Var {
  static constexpr std::uint32_t kInvalid = 0xffffffffu;
  std::uint32_t index = kInvalid;
  bool valid() const noexcept { return index != kInvalid; }
};

// Define-by-run reverse-mode tape. Primitives (see ops.h) evaluate eagerly and
// record a backward rule whenever any operand requires gradients. A graph has
// a single writer; parameter values are referenced, not copied, so the
// ParameterSet must outlive the graph and stay unmodified while it is in use.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph& g, Var self, const Tensor<T>& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  // Named leaf. Throws NumericError naming the tensor if it holds NaN/inf.
  Var Input(std::string name, Tensor<T> value, bool requires_grad = false);
  // Unnamed leaf that never requires gradients.
  Var Constant(Tensor<T> value);
  // Trainable leaf bound to params[id]. Repeated binds return the same Var.
  Var Param(const ParameterSet<T>& params, ParamId id);

  const Tensor<T>& value(Var v) const;
  // Gradient accumulated by the last Backward; zeros if nothing reached v.
  const Tensor<T>& grad(Var v);
  bool requires_grad(Var v) const;
  std::string_view op(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Seeds d(output)/d(output) = 1; output must hold a single value.
  void Backward(Var output);
  void Backward(Var output, const Tensor<T>& seed);

  // grads[id] += gradient of every parameter of `params` bound on this graph.
  void AccumulateParamGrads(const ParameterSet<T>& params, Gradients<T>& grads) const;

  // Drops all recorded values so the graph can be rebuilt.
  void Reset();

  // --- primitive support ---
  Var Record(const char* op, Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var Record(const char* op, Tensor<T> value, const std::vector<Var>& inputs, BackwardFn backward);
  // Gradient accumulator of v during Backward, zero-initialized on first use.
  Tensor<T>& GradBuffer(Var v);

 private:
  struct Node {
    const char* op = "";
    std::string name;
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    std::vector<Var> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    const ParameterSet<T>* param_set = nullptr;
    ParamId param_id = 0;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  // Deque so references returned by value() survive later records.
  std::deque<Node> nodes_;
  std::map<std::pair<const void*, ParamId>, Var> bound_params_;
  bool backward_ready_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace mlasr::nn
