#pragma once

#include <span>
#include <vector>

#include "mlasr/nn/graph.h"

namespace mlasr::nn {

// Differentiable primitives. All operate on rank-2 (rows x cols) views; a
// rank-1 tensor is one row. Shape violations throw ShapeError naming the
// primitive and both operand shapes.

enum class Axis { kRows, kCols };

// Normalization epsilon shared by LayerNorm and GroupNorm.
inline constexpr double kNormEpsilon = 1e-6;

template <typename T> Var MatMul(Graph<T>& g, Var a, Var b, bool transpose_b = false);
// x[r, :] + bias for every row; bias has cols(x) values.
template <typename T> Var AddBias(Graph<T>& g, Var x, Var bias);
template <typename T> Var Add(Graph<T>& g, Var a, Var b);
template <typename T> Var Mul(Graph<T>& g, Var a, Var b);
template <typename T> Var Scale(Graph<T>& g, Var x, double factor);

template <typename T> Var Sigmoid(Graph<T>& g, Var x);
template <typename T> Var Swish(Graph<T>& g, Var x);
template <typename T> Var Relu(Graph<T>& g, Var x);
template <typename T> Var Tanh(Graph<T>& g, Var x);
// Softmax along the last axis.
template <typename T> Var Softmax(Graph<T>& g, Var x);

// Per-row normalization over all columns, then gamma * x + beta.
template <typename T>
Var LayerNorm(Graph<T>& g, Var x, Var gamma, Var beta, double eps = kNormEpsilon);
// Per-row normalization over `groups` contiguous column groups.
template <typename T>
Var GroupNorm(Graph<T>& g, Var x, Var gamma, Var beta, std::size_t groups,
              double eps = kNormEpsilon);

// Non-causal depthwise convolution over rows (time) with zero "same" padding.
// x: T x C, kernel: K x C with K odd.
template <typename T> Var DepthwiseConv1d(Graph<T>& g, Var x, Var kernel);

// Rows of table selected by ids.
template <typename T> Var Embedding(Graph<T>& g, Var table, std::span<const int> ids);

template <typename T> Var Concat(Graph<T>& g, const std::vector<Var>& parts, Axis axis);
// Half-open range [begin, end) along axis.
template <typename T> Var Slice(Graph<T>& g, Var x, Axis axis, std::size_t begin, std::size_t end);
// Mean over rows: T x C -> 1 x C.
template <typename T> Var MeanPool(Graph<T>& g, Var x);

// Sum of all elements, shape {1}.
template <typename T> Var Sum(Graph<T>& g, Var x);
template <typename T> Var Reshape(Graph<T>& g, Var x, Shape shape);

// Converts T x (2T-1) scores against relative offsets (column r holds
// distance T-1-r) into T x T query/key scores: y[i, j] = x[i, T-1-i+j].
template <typename T> Var RelShift(Graph<T>& g, Var x);

// Sum over rows of -log softmax(logits[r])[targets[r]], shape {1}.
template <typename T>
Var SoftmaxCrossEntropy(Graph<T>& g, Var logits, std::span<const int> targets);

}  // namespace mlasr::nn
