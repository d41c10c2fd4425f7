#include "mlasr/nn/ops.h"

#include <algorithm>
#include <cmath>
#include <memory>

#include <fmt/format.h>

#include "mlasr/common/error.h"

namespace mlasr::nn {
namespace {

template <typename T>
[[noreturn]] void ShapeMismatch(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  throw ShapeError(fmt::format("{}: incompatible shapes {} and {}", op, ShapeString(a.shape()),
                               ShapeString(b.shape())));
}

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void GemmNN(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* __restrict ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* __restrict bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
template <typename T>
void GemmNT(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* __restrict ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* __restrict bj = b + j * k;
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
template <typename T>
void GemmTN(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t r = 0; r < m; ++r) {
    const T* ar = a + r * k;
    const T* __restrict br = b + r * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ar[p];
      T* __restrict cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * br[j];
    }
  }
}

template <typename T>
T SigmoidScalar(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T, typename Fwd, typename Deriv>
Var Elementwise(Graph<T>& g, Var x, const char* op, Fwd fwd, Deriv deriv) {
  const Tensor<T>& xv = g.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return g.Record(op, std::move(out), {x}, [x, deriv](Graph<T>& g, Var self, const Tensor<T>& dy) {
    const Tensor<T>& xv = g.value(x);
    const Tensor<T>& yv = g.value(self);
    Tensor<T>& dx = g.GradBuffer(x);
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += dy[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

template <typename T>
Var MatMul(Graph<T>& g, Var a, Var b, bool transpose_b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  if (av.rank() > 2 || bv.rank() != 2) ShapeMismatch("matmul", av, bv);
  const std::size_t m = av.rows(), k = av.cols();
  const std::size_t bk = transpose_b ? bv.cols() : bv.rows();
  const std::size_t n = transpose_b ? bv.rows() : bv.cols();
  if (bk != k) ShapeMismatch("matmul", av, bv);
  Tensor<T> out({m, n});
  if (transpose_b) {
    GemmNT(av.data(), bv.data(), out.data(), m, k, n);
  } else {
    GemmNN(av.data(), bv.data(), out.data(), m, k, n);
  }
  return g.Record("matmul", std::move(out), {a, b},
                  [a, b, m, k, n, transpose_b](Graph<T>& g, Var, const Tensor<T>& dy) {
                    const Tensor<T>& av = g.value(a);
                    const Tensor<T>& bv = g.value(b);
                    if (g.requires_grad(a)) {
                      Tensor<T>& da = g.GradBuffer(a);
                      if (transpose_b) {
                        GemmNN(dy.data(), bv.data(), da.data(), m, n, k);
                      } else {
                        GemmNT(dy.data(), bv.data(), da.data(), m, n, k);
                      }
                    }
                    if (g.requires_grad(b)) {
                      Tensor<T>& db = g.GradBuffer(b);
                      if (transpose_b) {
                        GemmTN(dy.data(), av.data(), db.data(), m, n, k);
                      } else {
                        GemmTN(av.data(), dy.data(), db.data(), m, k, n);
                      }
                    }
                  });
}

template <typename T>
Var AddBias(Graph<T>& g, Var x, Var bias) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& bv = g.value(bias);
  if (bv.size() != xv.cols()) ShapeMismatch("add_bias", xv, bv);
  Tensor<T> out = xv;
  const std::size_t rows = xv.rows(), cols = xv.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    T* o = out.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) o[c] += bv[c];
  }
  return g.Record("add_bias", std::move(out), {x, bias},
                  [x, bias, rows, cols](Graph<T>& g, Var, const Tensor<T>& dy) {
                    if (g.requires_grad(x)) {
                      Tensor<T>& dx = g.GradBuffer(x);
                      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
                    }
                    if (g.requires_grad(bias)) {
                      Tensor<T>& db = g.GradBuffer(bias);
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < cols; ++c) db[c] += dy[r * cols + c];
                      }
                    }
                  });
}

template <typename T>
Var Add(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  if (!av.SameShape(bv)) ShapeMismatch("add", av, bv);
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return g.Record("add", std::move(out), {a, b}, [a, b](Graph<T>& g, Var, const Tensor<T>& dy) {
    for (Var v : {a, b}) {
      if (!g.requires_grad(v)) continue;
      Tensor<T>& d = g.GradBuffer(v);
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
  });
}

template <typename T>
Var Mul(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  if (!av.SameShape(bv)) ShapeMismatch("mul", av, bv);
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.Record("mul", std::move(out), {a, b}, [a, b](Graph<T>& g, Var, const Tensor<T>& dy) {
    const Tensor<T>& av = g.value(a);
    const Tensor<T>& bv = g.value(b);
    if (g.requires_grad(a)) {
      Tensor<T>& da = g.GradBuffer(a);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
    }
    if (g.requires_grad(b)) {
      Tensor<T>& db = g.GradBuffer(b);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

template <typename T>
Var Scale(Graph<T>& g, Var x, double factor) {
  const T f = static_cast<T>(factor);
  return Elementwise(
      g, x, "scale", [f](T v) { return v * f; }, [f](T, T) { return f; });
}

template <typename T>
Var Sigmoid(Graph<T>& g, Var x) {
  return Elementwise(
      g, x, "sigmoid", [](T v) { return SigmoidScalar(v); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var Swish(Graph<T>& g, Var x) {
  return Elementwise(
      g, x, "swish", [](T v) { return v * SigmoidScalar(v); },
      [](T v, T) {
        const T s = SigmoidScalar(v);
        return s * (T(1) + v * (T(1) - s));
      });
}

template <typename T>
Var Relu(Graph<T>& g, Var x) {
  return Elementwise(
      g, x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var Tanh(Graph<T>& g, Var x) {
  return Elementwise(
      g, x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var Softmax(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  Tensor<T> out(xv.shape());
  const std::size_t rows = xv.rows(), cols = xv.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * cols;
    T* o = out.data() + r * cols;
    const T mx = *std::max_element(in, in + cols);
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return g.Record("softmax", std::move(out), {x},
                  [x, rows, cols](Graph<T>& g, Var self, const Tensor<T>& dy) {
                    const Tensor<T>& y = g.value(self);
                    Tensor<T>& dx = g.GradBuffer(x);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const std::size_t off = r * cols;
                      T dot = 0;
                      for (std::size_t c = 0; c < cols; ++c) dot += dy[off + c] * y[off + c];
                      for (std::size_t c = 0; c < cols; ++c) {
                        dx[off + c] += y[off + c] * (dy[off + c] - dot);
                      }
                    }
                  });
}

template <typename T>
Var LayerNorm(Graph<T>& g, Var x, Var gamma, Var beta, double eps) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& gv = g.value(gamma);
  const Tensor<T>& bv = g.value(beta);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gv.size() != cols) ShapeMismatch("layer_norm", xv, gv);
  if (bv.size() != cols) ShapeMismatch("layer_norm", xv, bv);
  auto xhat = std::make_shared<Tensor<T>>(xv.shape());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * cols;
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<T>(cols);
    const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (in[c] - mean) * is;
      (*xhat)(r, c) = h;
      out(r, c) = gv[c] * h + bv[c];
    }
  }
  return g.Record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, rows, cols, xhat, inv_std](Graph<T>& g, Var, const Tensor<T>& dy) {
        const Tensor<T>& gv = g.value(gamma);
        if (g.requires_grad(gamma)) {
          Tensor<T>& dg = g.GradBuffer(gamma);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) dg[c] += dy(r, c) * (*xhat)(r, c);
        }
        if (g.requires_grad(beta)) {
          Tensor<T>& db = g.GradBuffer(beta);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) db[c] += dy(r, c);
        }
        if (g.requires_grad(x)) {
          Tensor<T>& dx = g.GradBuffer(x);
          const T n = static_cast<T>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_dh = 0, mean_dh_h = 0;
            for (std::size_t c = 0; c < cols; ++c) {
              const T dh = dy(r, c) * gv[c];
              mean_dh += dh;
              mean_dh_h += dh * (*xhat)(r, c);
            }
            mean_dh /= n;
            mean_dh_h /= n;
            for (std::size_t c = 0; c < cols; ++c) {
              const T dh = dy(r, c) * gv[c];
              dx(r, c) += (*inv_std)[r] * (dh - mean_dh - (*xhat)(r, c) * mean_dh_h);
            }
          }
        }
      });
}

template <typename T>
Var GroupNorm(Graph<T>& g, Var x, Var gamma, Var beta, std::size_t groups, double eps) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& gv = g.value(gamma);
  const Tensor<T>& bv = g.value(beta);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (groups == 0 || cols % groups != 0) {
    throw ShapeError(fmt::format("group_norm: {} columns not divisible into {} groups", cols, groups));
  }
  if (gv.size() != cols) ShapeMismatch("group_norm", xv, gv);
  if (bv.size() != cols) ShapeMismatch("group_norm", xv, bv);
  const std::size_t width = cols / groups;
  auto xhat = std::make_shared<Tensor<T>>(xv.shape());
  auto inv_std = std::make_shared<std::vector<T>>(rows * groups);
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t grp = 0; grp < groups; ++grp) {
      const std::size_t c0 = grp * width;
      T mean = 0;
      for (std::size_t c = c0; c < c0 + width; ++c) mean += xv(r, c);
      mean /= static_cast<T>(width);
      T var = 0;
      for (std::size_t c = c0; c < c0 + width; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
      var /= static_cast<T>(width);
      const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
      (*inv_std)[r * groups + grp] = is;
      for (std::size_t c = c0; c < c0 + width; ++c) {
        const T h = (xv(r, c) - mean) * is;
        (*xhat)(r, c) = h;
        out(r, c) = gv[c] * h + bv[c];
      }
    }
  }
  return g.Record(
      "group_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, rows, cols, groups, width, xhat, inv_std](Graph<T>& g, Var,
                                                                  const Tensor<T>& dy) {
        const Tensor<T>& gv = g.value(gamma);
        if (g.requires_grad(gamma)) {
          Tensor<T>& dg = g.GradBuffer(gamma);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) dg[c] += dy(r, c) * (*xhat)(r, c);
        }
        if (g.requires_grad(beta)) {
          Tensor<T>& db = g.GradBuffer(beta);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) db[c] += dy(r, c);
        }
        if (g.requires_grad(x)) {
          Tensor<T>& dx = g.GradBuffer(x);
          const T n = static_cast<T>(width);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t grp = 0; grp < groups; ++grp) {
              const std::size_t c0 = grp * width;
              T mean_dh = 0, mean_dh_h = 0;
              for (std::size_t c = c0; c < c0 + width; ++c) {
                const T dh = dy(r, c) * gv[c];
                mean_dh += dh;
                mean_dh_h += dh * (*xhat)(r, c);
              }
              mean_dh /= n;
              mean_dh_h /= n;
              const T is = (*inv_std)[r * groups + grp];
              for (std::size_t c = c0; c < c0 + width; ++c) {
                const T dh = dy(r, c) * gv[c];
                dx(r, c) += is * (dh - mean_dh - (*xhat)(r, c) * mean_dh_h);
              }
            }
          }
        }
      });
}

template <typename T>
Var DepthwiseConv1d(Graph<T>& g, Var x, Var kernel) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& kv = g.value(kernel);
  if (kv.rank() != 2 || kv.cols() != xv.cols() || kv.rows() % 2 == 0) {
    ShapeMismatch("depthwise_conv1d", xv, kv);
  }
  const std::size_t steps = xv.rows(), channels = xv.cols(), width = kv.rows();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(width / 2);
  Tensor<T> out({steps, channels});
  for (std::size_t t = 0; t < steps; ++t) {
    T* o = out.data() + t * channels;
    for (std::size_t k = 0; k < width; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
      const T* in = xv.data() + static_cast<std::size_t>(src) * channels;
      const T* w = kv.data() + k * channels;
      for (std::size_t c = 0; c < channels; ++c) o[c] += w[c] * in[c];
    }
  }
  return g.Record("depthwise_conv1d", std::move(out), {x, kernel},
                  [x, kernel, steps, channels, width, pad](Graph<T>& g, Var, const Tensor<T>& dy) {
                    const Tensor<T>& xv = g.value(x);
                    const Tensor<T>& kv = g.value(kernel);
                    const bool gx = g.requires_grad(x), gk = g.requires_grad(kernel);
                    Tensor<T>* dx = gx ? &g.GradBuffer(x) : nullptr;
                    Tensor<T>* dk = gk ? &g.GradBuffer(kernel) : nullptr;
                    for (std::size_t t = 0; t < steps; ++t) {
                      const T* d = dy.data() + t * channels;
                      for (std::size_t k = 0; k < width; ++k) {
                        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
                        if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
                        const std::size_t s = static_cast<std::size_t>(src) * channels;
                        for (std::size_t c = 0; c < channels; ++c) {
                          if (dx) (*dx)[s + c] += kv[k * channels + c] * d[c];
                          if (dk) (*dk)[k * channels + c] += xv[s + c] * d[c];
                        }
                      }
                    }
                  });
}

template <typename T>
Var Embedding(Graph<T>& g, Var table, std::span<const int> ids) {
  const Tensor<T>& tv = g.value(table);
  if (tv.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + ShapeString(tv.shape()));
  const std::size_t vocab = tv.rows(), dim = tv.cols();
  Tensor<T> out({ids.size(), dim});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw ShapeError(fmt::format("embedding: id {} outside table {}", ids[i], ShapeString(tv.shape())));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * dim, dim, out.data() + i * dim);
  }
  return g.Record("embedding", std::move(out), {table},
                  [table, ids = std::vector<int>(ids.begin(), ids.end()), dim](
                      Graph<T>& g, Var, const Tensor<T>& dy) {
                    Tensor<T>& dt = g.GradBuffer(table);
                    for (std::size_t i = 0; i < ids.size(); ++i) {
                      T* row = dt.data() + static_cast<std::size_t>(ids[i]) * dim;
                      for (std::size_t c = 0; c < dim; ++c) row[c] += dy[i * dim + c];
                    }
                  });
}

template <typename T>
Var Concat(Graph<T>& g, const std::vector<Var>& parts, Axis axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Tensor<T>& first = g.value(parts.front());
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor<T>& pv = g.value(p);
    if (axis == Axis::kRows ? pv.cols() != first.cols() : pv.rows() != first.rows()) {
      ShapeMismatch("concat", first, pv);
    }
    extents.push_back(axis == Axis::kRows ? pv.rows() : pv.cols());
    total += extents.back();
  }
  const std::size_t rows = axis == Axis::kRows ? total : first.rows();
  const std::size_t cols = axis == Axis::kRows ? first.cols() : total;
  Tensor<T> out({rows, cols});
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor<T>& pv = g.value(parts[i]);
    if (axis == Axis::kRows) {
      std::copy(pv.data(), pv.data() + pv.size(), out.data() + offset * cols);
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(pv.data() + r * extents[i], extents[i], out.data() + r * cols + offset);
      }
    }
    offset += extents[i];
  }
  return g.Record("concat", std::move(out), parts,
                  [parts, extents, axis, rows, cols](Graph<T>& g, Var, const Tensor<T>& dy) {
                    std::size_t offset = 0;
                    for (std::size_t i = 0; i < parts.size(); ++i) {
                      if (g.requires_grad(parts[i])) {
                        Tensor<T>& d = g.GradBuffer(parts[i]);
                        if (axis == Axis::kRows) {
                          const T* src = dy.data() + offset * cols;
                          for (std::size_t k = 0; k < d.size(); ++k) d[k] += src[k];
                        } else {
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < extents[i]; ++c) {
                              d[r * extents[i] + c] += dy[r * cols + offset + c];
                            }
                          }
                        }
                      }
                      offset += extents[i];
                    }
                  });
}

template <typename T>
Var Slice(Graph<T>& g, Var x, Axis axis, std::size_t begin, std::size_t end) {
  const Tensor<T>& xv = g.value(x);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  const std::size_t extent = axis == Axis::kRows ? rows : cols;
  if (begin >= end || end > extent) {
    throw ShapeError(fmt::format("slice: range [{}, {}) invalid for {}", begin, end,
                                 ShapeString(xv.shape())));
  }
  const std::size_t out_rows = axis == Axis::kRows ? end - begin : rows;
  const std::size_t out_cols = axis == Axis::kRows ? cols : end - begin;
  Tensor<T> out({out_rows, out_cols});
  for (std::size_t r = 0; r < out_rows; ++r) {
    const std::size_t src_r = axis == Axis::kRows ? r + begin : r;
    const std::size_t src_c = axis == Axis::kRows ? 0 : begin;
    std::copy_n(xv.data() + src_r * cols + src_c, out_cols, out.data() + r * out_cols);
  }
  return g.Record("slice", std::move(out), {x},
                  [x, axis, begin, cols, out_rows, out_cols](Graph<T>& g, Var, const Tensor<T>& dy) {
                    Tensor<T>& dx = g.GradBuffer(x);
                    for (std::size_t r = 0; r < out_rows; ++r) {
                      const std::size_t dst_r = axis == Axis::kRows ? r + begin : r;
                      const std::size_t dst_c = axis == Axis::kRows ? 0 : begin;
                      T* d = dx.data() + dst_r * cols + dst_c;
                      for (std::size_t c = 0; c < out_cols; ++c) d[c] += dy[r * out_cols + c];
                    }
                  });
}

template <typename T>
Var MeanPool(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor<T> out({1, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += xv(r, c);
  for (std::size_t c = 0; c < cols; ++c) out[c] /= static_cast<T>(rows);
  return g.Record("mean_pool", std::move(out), {x},
                  [x, rows, cols](Graph<T>& g, Var, const Tensor<T>& dy) {
                    Tensor<T>& dx = g.GradBuffer(x);
                    const T inv = T(1) / static_cast<T>(rows);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < cols; ++c) dx(r, c) += dy[c] * inv;
                  });
}

template <typename T>
Var Sum(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  T total = 0;
  for (T v : xv.values()) total += v;
  return g.Record("sum", Tensor<T>({1}, {total}), {x}, [x](Graph<T>& g, Var, const Tensor<T>& dy) {
    Tensor<T>& dx = g.GradBuffer(x);
    for (T& v : dx.values()) v += dy[0];
  });
}

template <typename T>
Var Reshape(Graph<T>& g, Var x, Shape shape) {
  Tensor<T> out = g.value(x);
  out.Reshape(std::move(shape));
  return g.Record("reshape", std::move(out), {x}, [x](Graph<T>& g, Var, const Tensor<T>& dy) {
    Tensor<T>& dx = g.GradBuffer(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
}

template <typename T>
Var RelShift(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  const std::size_t steps = xv.rows();
  if (xv.cols() != 2 * steps - 1) {
    throw ShapeError(fmt::format("rel_shift: expected {}x{} scores, got {}", steps, 2 * steps - 1,
                                 ShapeString(xv.shape())));
  }
  const std::size_t width = xv.cols();
  Tensor<T> out({steps, steps});
  for (std::size_t i = 0; i < steps; ++i)
    for (std::size_t j = 0; j < steps; ++j) out(i, j) = xv[i * width + steps - 1 - i + j];
  return g.Record("rel_shift", std::move(out), {x},
                  [x, steps, width](Graph<T>& g, Var, const Tensor<T>& dy) {
                    Tensor<T>& dx = g.GradBuffer(x);
                    for (std::size_t i = 0; i < steps; ++i)
                      for (std::size_t j = 0; j < steps; ++j)
                        dx[i * width + steps - 1 - i + j] += dy(i, j);
                  });
}

template <typename T>
Var SoftmaxCrossEntropy(Graph<T>& g, Var logits, std::span<const int> targets) {
  const Tensor<T>& lv = g.value(logits);
  const std::size_t rows = lv.rows(), cols = lv.cols();
  if (targets.size() != rows) {
    throw ShapeError(fmt::format("softmax_cross_entropy: {} targets for logits {}", targets.size(),
                                 ShapeString(lv.shape())));
  }
  auto probs = std::make_shared<Tensor<T>>(lv.shape());
  T loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= cols) {
      throw ShapeError(fmt::format("softmax_cross_entropy: target {} outside {} classes", t, cols));
    }
    const T* in = lv.data() + r * cols;
    const T mx = *std::max_element(in, in + cols);
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      (*probs)(r, c) = std::exp(in[c] - mx);
      total += (*probs)(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) (*probs)(r, c) /= total;
    loss += std::log(total) + mx - in[t];
  }
  return g.Record("softmax_cross_entropy", Tensor<T>({1}, {loss}), {logits},
                  [logits, probs, tgt = std::vector<int>(targets.begin(), targets.end()), cols](
                      Graph<T>& g, Var, const Tensor<T>& dy) {
                    Tensor<T>& dl = g.GradBuffer(logits);
                    for (std::size_t r = 0; r < tgt.size(); ++r) {
                      for (std::size_t c = 0; c < cols; ++c) {
                        const T onehot = static_cast<int>(c) == tgt[r] ? T(1) : T(0);
                        dl(r, c) += dy[0] * ((*probs)(r, c) - onehot);
                      }
                    }
                  });
}

#define MLASR_INSTANTIATE_OPS(T)                                                        \
  template Var MatMul<T>(Graph<T>&, Var, Var, bool);                                    \
  template Var AddBias<T>(Graph<T>&, Var, Var);                                         \
  template Var Add<T>(Graph<T>&, Var, Var);                                             \
  template Var Mul<T>(Graph<T>&, Var, Var);                                             \
  template Var Scale<T>(Graph<T>&, Var, double);                                        \
  template Var Sigmoid<T>(Graph<T>&, Var);                                              \
  template Var Swish<T>(Graph<T>&, Var);                                                \
  template Var Relu<T>(Graph<T>&, Var);                                                 \
  template Var Tanh<T>(Graph<T>&, Var);                                                 \
  template Var Softmax<T>(Graph<T>&, Var);                                              \
  template Var LayerNorm<T>(Graph<T>&, Var, Var, Var, double);                          \
  template Var GroupNorm<T>(Graph<T>&, Var, Var, Var, std::size_t, double);             \
  template Var DepthwiseConv1d<T>(Graph<T>&, Var, Var);                                 \
  template Var Embedding<T>(Graph<T>&, Var, std::span<const int>);                      \
  template Var Concat<T>(Graph<T>&, const std::vector<Var>&, Axis);                     \
  template Var Slice<T>(Graph<T>&, Var, Axis, std::size_t, std::size_t);                \
  template Var MeanPool<T>(Graph<T>&, Var);                                             \
  template Var Sum<T>(Graph<T>&, Var);                                                  \
  template Var Reshape<T>(Graph<T>&, Var, Shape);                                       \
  template Var RelShift<T>(Graph<T>&, Var);                                             \
  template Var SoftmaxCrossEntropy<T>(Graph<T>&, Var, std::span<const int>);

MLASR_INSTANTIATE_OPS(float)
MLASR_INSTANTIATE_OPS(double)

#undef MLASR_INSTANTIATE_OPS

}  // namespace mlasr::nn
