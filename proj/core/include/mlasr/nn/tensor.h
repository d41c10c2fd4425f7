#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mlasr::nn {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape) noexcept;
std::string ShapeString(const Shape& shape);

// Dense row-major array. Rank-2 tensors are viewed as rows x cols; a rank-1
// tensor is a single row.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> values);

  static Tensor Full(Shape shape, T value);
  static Tensor Identity(std::size_t n);
  static Tensor Matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Product of all extents but the last.
  std::size_t rows() const noexcept;
  // Last extent.
  std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols(), cols()}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols(), cols()};
  }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols() + c];
  }

  void Fill(T value);
  // Same data, new extents; element count must match.
  void Reshape(Shape shape);
  bool AllFinite() const noexcept;
  bool SameShape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Element-wise cast between precisions.
template <typename To, typename From>
Tensor<To> Cast(const Tensor<From>& src) {
  std::vector<To> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<To>(src[i]);
  return Tensor<To>(src.shape(), std::move(out));
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mlasr::nn
