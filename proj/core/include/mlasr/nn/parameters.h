#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mlasr/common/random.h"
#include "mlasr/nn/tensor.h"

namespace mlasr::nn {

using ParamId = std::uint32_t;

enum class Init {
  kZeros,
  kOnes,
  kGlorotUniform,  // fan_in = rows, fan_out = cols
  kNormalSmall,    // N(0, 0.02^2), used for embeddings
};

// Named, ordered collection of trainable tensors. Layers declare what they
// need; declaring an existing name returns the stored entry after a shape
// check, so the same layer code both creates fresh models and binds to
// loaded checkpoints.
template <typename T>
class ParameterSet {
 public:
  ParamId Declare(const std::string& name, const Shape& shape, Init init, Rng& rng);
  // Inserts a tensor under a fresh name; throws on duplicates.
  ParamId Insert(const std::string& name, Tensor<T> value);

  std::optional<ParamId> Find(std::string_view name) const;
  const Tensor<T>& value(ParamId id) const { return values_.at(id); }
  Tensor<T>& value(ParamId id) { return values_.at(id); }
  const std::string& name(ParamId id) const { return names_.at(id); }

  std::size_t size() const noexcept { return values_.size(); }
  std::size_t NumScalars() const noexcept;
  // Scalars in parameters whose name starts with prefix.
  std::size_t NumScalarsWithPrefix(std::string_view prefix) const;

  bool operator==(const ParameterSet& other) const {
    return names_ == other.names_ && values_ == other.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
  std::unordered_map<std::string, ParamId> index_;
};

// Gradient buffers aligned with a ParameterSet.
template <typename T>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet<T>& params);

  Tensor<T>& operator[](ParamId id) { return grads_.at(id); }
  const Tensor<T>& operator[](ParamId id) const { return grads_.at(id); }
  std::size_t size() const noexcept { return grads_.size(); }

  void Zero();
  void Scale(T factor);
  // this += other, in parameter order.
  void Accumulate(const Gradients& other);

 private:
  std::vector<Tensor<T>> grads_;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;

}  // namespace mlasr::nn
