#include "mlasr/nn/parameters.h"

#include <cmath>

#include <fmt/format.h>

#include "mlasr/common/error.h"

namespace mlasr::nn {

template <typename T>
ParamId ParameterSet<T>::Declare(const std::string& name, const Shape& shape, Init init,
                                 Rng& rng) {
  if (auto it = index_.find(name); it != index_.end()) {
    const Tensor<T>& existing = values_[it->second];
    if (existing.shape() != shape) {
      throw ShapeError(fmt::format("parameter '{}' has shape {} but layer expects {}", name,
                                   ShapeString(existing.shape()), ShapeString(shape)));
    }
    return it->second;
  }
  Tensor<T> t(shape);
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      t.Fill(T(1));
      break;
    case Init::kGlorotUniform: {
      const double fan_in = shape.size() >= 2 ? static_cast<double>(shape[0]) : 1.0;
      const double fan_out = static_cast<double>(shape.back());
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (T& v : t.values()) v = static_cast<T>((2.0 * UniformUnit(rng) - 1.0) * limit);
      break;
    }
    case Init::kNormalSmall:
      for (T& v : t.values()) v = static_cast<T>(0.02 * StandardNormal(rng));
      break;
  }
  return Insert(name, std::move(t));
}

template <typename T>
ParamId ParameterSet<T>::Insert(const std::string& name, Tensor<T> value) {
  if (index_.contains(name)) throw ConfigError(fmt::format("duplicate parameter '{}'", name));
  const auto id = static_cast<ParamId>(values_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
  index_.emplace(name, id);
  return id;
}

template <typename T>
std::optional<ParamId> ParameterSet<T>::Find(std::string_view name) const {
  if (auto it = index_.find(std::string(name)); it != index_.end()) return it->second;
  return std::nullopt;
}

template <typename T>
std::size_t ParameterSet<T>::NumScalars() const noexcept {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

template <typename T>
std::size_t ParameterSet<T>::NumScalarsWithPrefix(std::string_view prefix) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (names_[i].starts_with(prefix)) n += values_[i].size();
  }
  return n;
}

template <typename T>
Gradients<T>::Gradients(const ParameterSet<T>& params) {
  grads_.reserve(params.size());
  for (ParamId i = 0; i < params.size(); ++i) grads_.emplace_back(params.value(i).shape());
}

template <typename T>
void Gradients<T>::Zero() {
  for (auto& g : grads_) g.Fill(T(0));
}

template <typename T>
void Gradients<T>::Scale(T factor) {
  for (auto& g : grads_) {
    for (T& v : g.values()) v *= factor;
  }
}

template <typename T>
void Gradients<T>::Accumulate(const Gradients& other) {
  if (other.grads_.size() != grads_.size()) {
    throw ShapeError("gradient buffers belong to different parameter sets");
  }
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    T* dst = grads_[i].data();
    const T* src = other.grads_[i].data();
    for (std::size_t k = 0; k < grads_[i].size(); ++k) dst[k] += src[k];
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Gradients<float>;
template class Gradients<double>;

}  // namespace mlasr::nn
