#include "mlasr/nn/tensor.h"

#include <cmath>
#include <functional>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "mlasr/common/error.h"

namespace mlasr::nn {

std::size_t NumElements(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string ShapeString(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, "x")); }

template <typename T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)), data_(NumElements(shape_), T(0)) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != NumElements(shape_)) {
    throw ShapeError(fmt::format("tensor data has {} values but shape {} needs {}", data_.size(),
                                 ShapeString(shape_), NumElements(shape_)));
  }
}

template <typename T>
Tensor<T> Tensor<T>::Full(Shape shape, T value) {
  Tensor t(std::move(shape));
  t.Fill(value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::Identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = T(1);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::Matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values) {
  return Tensor({rows, cols}, std::vector<T>(values));
}

template <typename T>
std::size_t Tensor<T>::rows() const noexcept {
  if (shape_.size() <= 1) return 1;
  return data_.size() / shape_.back();
}

template <typename T>
void Tensor<T>::Fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
void Tensor<T>::Reshape(Shape shape) {
  if (NumElements(shape) != data_.size()) {
    throw ShapeError(fmt::format("cannot reshape {} to {}", ShapeString(shape_), ShapeString(shape)));
  }
  shape_ = std::move(shape);
}

template <typename T>
bool Tensor<T>::AllFinite() const noexcept {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace mlasr::nn
