#include "mlasr/nn/graph.h"

#include <fmt/format.h>

#include "mlasr/common/error.h"

namespace mlasr::nn {

template <typename T>
Var Graph<T>::Input(std::string name, Tensor<T> value, bool requires_grad) {
  if (!value.AllFinite()) {
    throw NumericError(fmt::format("input tensor '{}' contains non-finite values", name));
  }
  Node n;
  n.op = "input";
  n.name = std::move(name);
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  backward_ready_ = false;
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::Constant(Tensor<T> value) {
  Node n;
  n.op = "constant";
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::Param(const ParameterSet<T>& params, ParamId id) {
  const auto key = std::make_pair(static_cast<const void*>(&params), id);
  if (auto it = bound_params_.find(key); it != bound_params_.end()) return it->second;
  Node n;
  n.op = "param";
  n.name = params.name(id);
  n.external = &params.value(id);
  n.requires_grad = true;
  n.param_set = &params;
  n.param_id = id;
  nodes_.push_back(std::move(n));
  const Var v{static_cast<std::uint32_t>(nodes_.size() - 1)};
  bound_params_.emplace(key, v);
  return v;
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  if (!v.valid() || v.index >= nodes_.size()) throw UsageError("variable does not belong to this graph");
  return nodes_[v.index];
}

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var v) {
  if (!v.valid() || v.index >= nodes_.size()) throw UsageError("variable does not belong to this graph");
  return nodes_[v.index];
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  const Node& n = node(v);
  return n.external != nullptr ? *n.external : n.owned;
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var v) {
  return GradBuffer(v);
}

template <typename T>
bool Graph<T>::requires_grad(Var v) const {
  return node(v).requires_grad;
}

template <typename T>
std::string_view Graph<T>::op(Var v) const {
  return node(v).op;
}

template <typename T>
Var Graph<T>::Record(const char* op, Tensor<T> value, std::initializer_list<Var> inputs,
                     BackwardFn backward) {
  return Record(op, std::move(value), std::vector<Var>(inputs), std::move(backward));
}

template <typename T>
Var Graph<T>::Record(const char* op, Tensor<T> value, const std::vector<Var>& inputs,
                     BackwardFn backward) {
  Node n;
  n.op = op;
  n.owned = std::move(value);
  for (Var in : inputs) {
    if (node(in).requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) {
    n.inputs = inputs;
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  backward_ready_ = false;
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Tensor<T>& Graph<T>::GradBuffer(Var v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad = Tensor<T>(value(v).shape());
  return n.grad;
}

template <typename T>
void Graph<T>::Backward(Var output) {
  if (nodes_.empty() || !output.valid() || output.index >= nodes_.size()) {
    throw UsageError("backward called before forward: graph holds no value for the output");
  }
  if (value(output).size() != 1) {
    throw ShapeError(fmt::format("backward without seed needs a scalar output, got {}",
                                 ShapeString(value(output).shape())));
  }
  Backward(output, Tensor<T>::Full(value(output).shape(), T(1)));
}

template <typename T>
void Graph<T>::Backward(Var output, const Tensor<T>& seed) {
  if (nodes_.empty() || !output.valid() || output.index >= nodes_.size()) {
    throw UsageError("backward called before forward: graph holds no value for the output");
  }
  if (!seed.SameShape(value(output))) {
    throw ShapeError(fmt::format("backward seed shape {} does not match output {}",
                                 ShapeString(seed.shape()), ShapeString(value(output).shape())));
  }
  for (Node& n : nodes_) n.grad = Tensor<T>();
  nodes_[output.index].grad = seed;
  for (std::size_t i = output.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    // The callback may touch other nodes' grads but never resizes nodes_.
    n.backward(*this, Var{static_cast<std::uint32_t>(i)}, n.grad);
    for (Var in : n.inputs) {
      const Node& src = nodes_[in.index];
      if (!src.grad.empty() && !src.grad.AllFinite()) {
        throw NumericError(fmt::format("non-finite gradient produced by backward of '{}'", n.op));
      }
    }
  }
  backward_ready_ = true;
}

template <typename T>
void Graph<T>::AccumulateParamGrads(const ParameterSet<T>& params, Gradients<T>& grads) const {
  if (!backward_ready_) throw UsageError("parameter gradients requested before backward");
  for (const auto& [key, v] : bound_params_) {
    if (key.first != &params) continue;
    const Node& n = nodes_[v.index];
    if (n.grad.empty()) continue;
    Tensor<T>& dst = grads[key.second];
    T* d = dst.data();
    const T* s = n.grad.data();
    for (std::size_t k = 0; k < dst.size(); ++k) d[k] += s[k];
  }
}

template <typename T>
void Graph<T>::Reset() {
  nodes_.clear();
  bound_params_.clear();
  backward_ready_ = false;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace mlasr::nn
