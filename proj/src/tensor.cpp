// Copyright 2026 The CSG Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "csg/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "csg/error.hpp"

namespace csg {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
thread_local GradTape<T>* g_active_tape = nullptr;

template <typename T>
Buffer<T>& grad_buffer(TensorNode<T>& node) {
  if (node.grad.empty()) node.grad.assign(node.value.size(), T(0));
  return node.grad;
}

template <typename T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (g_active_tape<T> == nullptr) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
Tensor<T> emit(Shape shape, Buffer<T> value, bool record,
               typename GradTape<T>::BackwardFn fn) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = record;
  if (record) g_active_tape<T>->record(node, std::move(fn));
  return Tensor<T>(std::move(node));
}

template <typename T>
void require_defined(const Tensor<T>& t, const char* op) {
  if (!t.defined()) {
    throw ContractError(std::string(op) + ": undefined tensor");
  }
}

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
  require_defined(t, op);
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " +
                     shape_string(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

// Applies f elementwise and records dx += dy * df(x, y).
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
  require_defined(x, "unary");
  Buffer<T> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  const bool record = should_record<T>({&x});
  auto xn = x.shared_node();
  return emit<T>(x.shape(), std::move(out), record, [xn, df](TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    auto& gx = grad_buffer(*xn);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += o.grad[i] * df(xn->value[i], o.value[i]);
    }
  });
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto node = std::make_shared<TensorNode<T>>();
  node->value.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data_in,
                               bool requires_grad) {
  Buffer<T> data(data_in.begin(), data_in.end());
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("from_data: shape " + shape_string(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return full(Shape{1}, value, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item: tensor of shape " + shape_string(shape()) +
                        " is not a scalar");
  }
  return node_->value[0];
}

template <typename T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
  if (rank() != 2 || row >= dim(0) || col >= dim(1)) {
    throw IndexError("at: (" + std::to_string(row) + ", " + std::to_string(col) +
                     ") outside " + shape_string(shape()));
  }
  return node_->value[row * dim(1) + col];
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  return grad_buffer(*node_);
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor<T>(std::move(node));
}

// ---- tape ------------------------------------------------------------------

template <typename T>
void GradTape<T>::record(std::shared_ptr<TensorNode<T>> out, BackwardFn fn) {
  entries_.push_back(Entry{std::move(out), std::move(fn)});
}

template <typename T>
void GradTape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_string(loss.shape())
                                        : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss was not produced by recorded ops");
  }
  grad_buffer(*loss.node())[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->out->grad.empty()) continue;
    it->fn(*it->out);
  }
}

template <typename T>
GradTape<T>* active_tape() {
  return g_active_tape<T>;
}

template <typename T>
TapeScope<T>::TapeScope(GradTape<T>& tape) : previous_(g_active_tape<T>) {
  g_active_tape<T> = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  g_active_tape<T> = previous_;
}

template <typename T>
NoGradGuard<T>::NoGradGuard() : previous_(g_active_tape<T>) {
  g_active_tape<T> = nullptr;
}

template <typename T>
NoGradGuard<T>::~NoGradGuard() {
  g_active_tape<T> = previous_;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (g_active_tape<T> == nullptr) {
    throw ContractError("backward: no active gradient tape");
  }
  g_active_tape<T>->backward(loss);
}

// ---- primitives ------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ: " +
                     shape_string(a.shape()) + " * " + shape_string(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  Buffer<T> out(static_cast<std::size_t>(m * n));
  MatMap<T>(out.data(), m, n).noalias() =
      ConstMatMap<T>(a.data().data(), m, k) * ConstMatMap<T>(b.data().data(), k, n);
  const bool record = should_record<T>({&a, &b});
  auto an = a.shared_node();
  auto bn = b.shared_node();
  return emit<T>({a.dim(0), b.dim(1)}, std::move(out), record,
                 [an, bn, m, k, n](TensorNode<T>& o) {
                   ConstMatMap<T> dout(o.grad.data(), m, n);
                   if (an->requires_grad) {
                     MatMap<T>(grad_buffer(*an).data(), m, k).noalias() +=
                         dout * ConstMatMap<T>(bn->value.data(), k, n).transpose();
                   }
                   if (bn->requires_grad) {
                     MatMap<T>(grad_buffer(*bn).data(), k, n).noalias() +=
                         ConstMatMap<T>(an->value.data(), m, k).transpose() * dout;
                   }
                 });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Buffer<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  const bool record = should_record<T>({&a, &b});
  auto an = a.shared_node();
  auto bn = b.shared_node();
  return emit<T>(a.shape(), std::move(out), record, [an, bn](TensorNode<T>& o) {
    for (auto* n : {an.get(), bn.get()}) {
      if (!n->requires_grad) continue;
      auto& g = grad_buffer(*n);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  Buffer<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  const bool record = should_record<T>({&a, &b});
  auto an = a.shared_node();
  auto bn = b.shared_node();
  return emit<T>(a.shape(), std::move(out), record, [an, bn](TensorNode<T>& o) {
    if (an->requires_grad) {
      auto& g = grad_buffer(*an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = grad_buffer(*bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  Buffer<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  const bool record = should_record<T>({&a, &b});
  auto an = a.shared_node();
  auto bn = b.shared_node();
  return emit<T>(a.shape(), std::move(out), record, [an, bn](TensorNode<T>& o) {
    if (an->requires_grad) {
      auto& g = grad_buffer(*an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& g = grad_buffer(*bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * an->value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary<T>(
      x, [factor](T v) { return v * factor; },
      [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  return unary<T>(
      x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> rsub_scalar(T offset, const Tensor<T>& x) {
  return unary<T>(
      x, [offset](T v) { return offset - v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require_rank2(x, "add_bias");
  require_defined(bias, "add_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n) {
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) +
                     " does not match columns of " + shape_string(x.shape()));
  }
  Buffer<T> out(x.numel());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = x.data()[i * n + j] + bias.data()[j];
    }
  }
  const bool record = should_record<T>({&x, &bias});
  auto xn = x.shared_node();
  auto bn = bias.shared_node();
  return emit<T>(x.shape(), std::move(out), record, [xn, bn, m, n](TensorNode<T>& o) {
    if (xn->requires_grad) {
      auto& g = grad_buffer(*xn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = grad_buffer(*bn);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
      }
    }
  });
}

template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, const Tensor<T>& w) {
  require_rank2(x, "scale_rows");
  require_defined(w, "scale_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (w.numel() != m) {
    throw ShapeError("scale_rows: weights " + shape_string(w.shape()) +
                     " do not match rows of " + shape_string(x.shape()));
  }
  Buffer<T> out(x.numel());
  for (std::size_t i = 0; i < m; ++i) {
    const T wi = w.data()[i];
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] * wi;
  }
  const bool record = should_record<T>({&x, &w});
  auto xn = x.shared_node();
  auto wn = w.shared_node();
  return emit<T>(x.shape(), std::move(out), record, [xn, wn, m, n](TensorNode<T>& o) {
    if (xn->requires_grad) {
      auto& g = grad_buffer(*xn);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[i * n + j] * wn->value[i];
      }
    }
    if (wn->requires_grad) {
      auto& g = grad_buffer(*wn);
      for (std::size_t i = 0; i < m; ++i) {
        T acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += o.grad[i * n + j] * xn->value[i * n + j];
        g[i] += acc;
      }
    }
  });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  const T eps = static_cast<T>(kSqrtEpsilon);
  return unary<T>(
      x, [eps](T v) { return std::sqrt(std::max(v, eps)); },
      [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  const T lo = static_cast<T>(kSigmoidEpsilon);
  const T hi = T(1) - lo;
  return unary<T>(
      x,
      [lo, hi](T v) {
        // Stable in both tails.
        T s = v >= 0 ? T(1) / (T(1) + std::exp(-v))
                     : std::exp(v) / (T(1) + std::exp(v));
        return std::clamp(s, lo, hi);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return unary<T>(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  // tanh approximation, evaluated with Eigen's vectorized array functions
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  constexpr T c = T(0.7978845608028654);
  constexpr T a = T(0.044715);
  require_defined(x, "gelu");
  const auto n = static_cast<Eigen::Index>(x.numel());
  Eigen::Map<const Arr> in(x.data().data(), n);
  auto th = std::make_shared<Arr>((c * (in + a * in.cube())).tanh());
  Buffer<T> out(x.numel());
  Eigen::Map<Arr>(out.data(), n) = T(0.5) * in * (T(1) + *th);
  const bool record = should_record<T>({&x});
  auto xn = x.shared_node();
  if (!record) th.reset();
  return emit<T>(x.shape(), std::move(out), record, [xn, th, n, c, a](TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    Eigen::Map<const Arr> v(xn->value.data(), n);
    Eigen::Map<const Arr> g(o.grad.data(), n);
    Eigen::Map<Arr> gx(grad_buffer(*xn).data(), n);
    const Arr du = c * (T(1) + T(3) * a * v.square());
    gx += g * (T(0.5) * (T(1) + *th) + T(0.5) * v * (T(1) - th->square()) * du);
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  require_defined(x, "softmax");
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " +
                     shape_string(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t n = x.dim(axis);
  Buffer<T> out(x.numel());
  auto in = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t s = 0; s < inner; ++s) {
      const std::size_t base = o * n * inner + s;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in[base + j * inner]);
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const T e = std::exp(in[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  const bool record = should_record<T>({&x});
  auto xn = x.shared_node();
  return emit<T>(x.shape(), std::move(out), record,
                 [xn, outer, inner, n](TensorNode<T>& o) {
                   if (!xn->requires_grad) return;
                   auto& g = grad_buffer(*xn);
                   for (std::size_t a = 0; a < outer; ++a) {
                     for (std::size_t s = 0; s < inner; ++s) {
                       const std::size_t base = a * n * inner + s;
                       T dot = 0;
                       for (std::size_t j = 0; j < n; ++j) {
                         dot += o.grad[base + j * inner] * o.value[base + j * inner];
                       }
                       for (std::size_t j = 0; j < n; ++j) {
                         const std::size_t idx = base + j * inner;
                         g[idx] += o.value[idx] * (o.grad[idx] - dot);
                       }
                     }
                   }
                 });
}

template <typename T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "concat_last");
  require_rank2(b, "concat_last");
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("concat_last: row counts differ: " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), p = a.dim(1), q = b.dim(1);
  Buffer<T> out(m * (p + q));
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.data().data() + i * p, p, out.data() + i * (p + q));
    std::copy_n(b.data().data() + i * q, q, out.data() + i * (p + q) + p);
  }
  const bool record = should_record<T>({&a, &b});
  auto an = a.shared_node();
  auto bn = b.shared_node();
  return emit<T>({m, p + q}, std::move(out), record, [an, bn, m, p, q](TensorNode<T>& o) {
    if (an->requires_grad) {
      auto& g = grad_buffer(*an);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < p; ++j) g[i * p + j] += o.grad[i * (p + q) + j];
      }
    }
    if (bn->requires_grad) {
      auto& g = grad_buffer(*bn);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < q; ++j) g[i * q + j] += o.grad[i * (p + q) + p + j];
      }
    }
  });
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, T eps) {
  require_rank2(x, "layernorm");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (gamma.numel() != n || beta.numel() != n) {
    throw ShapeError("layernorm: gain/bias " + shape_string(gamma.shape()) + "/" +
                     shape_string(beta.shape()) + " do not match " +
                     shape_string(x.shape()));
  }
  Buffer<T> out(x.numel());
  auto xhat = std::make_shared<Buffer<T>>(x.numel());
  auto rstd = std::make_shared<Buffer<T>>(m);
  auto in = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += in[i * n + j];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const T d = in[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<T>(n);
    const T r = T(1) / std::sqrt(var + eps);
    (*rstd)[i] = r;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (in[i * n + j] - mu) * r;
      (*xhat)[i * n + j] = h;
      out[i * n + j] = h * gamma.data()[j] + beta.data()[j];
    }
  }
  const bool record = should_record<T>({&x, &gamma, &beta});
  auto xn = x.shared_node();
  auto gn = gamma.shared_node();
  auto bn = beta.shared_node();
  return emit<T>(x.shape(), std::move(out), record,
                 [xn, gn, bn, xhat, rstd, m, n](TensorNode<T>& o) {
                   if (gn->requires_grad) {
                     auto& g = grad_buffer(*gn);
                     for (std::size_t i = 0; i < m; ++i) {
                       for (std::size_t j = 0; j < n; ++j) {
                         g[j] += o.grad[i * n + j] * (*xhat)[i * n + j];
                       }
                     }
                   }
                   if (bn->requires_grad) {
                     auto& g = grad_buffer(*bn);
                     for (std::size_t i = 0; i < m; ++i) {
                       for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
                     }
                   }
                   if (!xn->requires_grad) return;
                   auto& g = grad_buffer(*xn);
                   const T inv_n = T(1) / static_cast<T>(n);
                   for (std::size_t i = 0; i < m; ++i) {
                     T sum_d = 0, sum_dh = 0;
                     for (std::size_t j = 0; j < n; ++j) {
                       const T d = o.grad[i * n + j] * gn->value[j];
                       sum_d += d;
                       sum_dh += d * (*xhat)[i * n + j];
                     }
                     const T r = (*rstd)[i];
                     for (std::size_t j = 0; j < n; ++j) {
                       const T d = o.grad[i * n + j] * gn->value[j];
                       g[i * n + j] +=
                           r * (d - inv_n * sum_d - (*xhat)[i * n + j] * inv_n * sum_dh);
                     }
                   }
                 });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, bool training) {
  require_defined(x, "dropout");
  if (!(p >= 0.0 && p < 1.0)) {
    throw ContractError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  auto mask = std::make_shared<Buffer<T>>(x.numel());
  Buffer<T> out(x.numel());
  // One draw per call seeds a counter-based stream (splitmix64 finalizer).
  const std::uint64_t seed = rng();
  const auto threshold = static_cast<std::uint64_t>(std::ldexp(p, 32));
  const T* in = x.data().data();
  T* m = mask->data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (i + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    m[i] = (z >> 32) < threshold ? T(0) : keep_scale;
    out[i] = in[i] * m[i];
  }
  const bool record = should_record<T>({&x});
  auto xn = x.shared_node();
  return emit<T>(x.shape(), std::move(out), record, [xn, mask](TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    auto& g = grad_buffer(*xn);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * (*mask)[i];
  });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const int> ids) {
  require_rank2(table, "embedding_lookup");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  Buffer<T> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.data() + i * d);
  }
  const bool record = should_record<T>({&table});
  auto tn = table.shared_node();
  auto idv = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  return emit<T>({ids.size(), d}, std::move(out), record, [tn, idv, d](TensorNode<T>& o) {
    if (!tn->requires_grad) return;
    auto& g = grad_buffer(*tn);
    for (std::size_t i = 0; i < idv->size(); ++i) {
      T* row = g.data() + static_cast<std::size_t>((*idv)[i]) * d;
      for (std::size_t j = 0; j < d; ++j) row[j] += o.grad[i * d + j];
    }
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  require_rank2(logits, "cross_entropy");
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for logits " + shape_string(logits.shape()));
  }
  if (rows == 0) throw ShapeError("cross_entropy: empty logits");
  auto probs = std::make_shared<Buffer<T>>(logits.numel());
  T total = 0;
  auto in = logits.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw IndexError("cross_entropy: target " + std::to_string(t) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
    const T* row = in.data() + i * vocab;
    T mx = row[0];
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    T z = 0;
    for (std::size_t j = 0; j < vocab; ++j) {
      const T e = std::exp(row[j] - mx);
      (*probs)[i * vocab + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < vocab; ++j) (*probs)[i * vocab + j] /= z;
    total += (std::log(z) + mx) - row[t];
  }
  const T inv_rows = T(1) / static_cast<T>(rows);
  const bool record = should_record<T>({&logits});
  auto ln = logits.shared_node();
  auto tv = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  return emit<T>({1}, {total * inv_rows}, record,
                 [ln, probs, tv, rows, vocab, inv_rows](TensorNode<T>& o) {
                   if (!ln->requires_grad) return;
                   auto& g = grad_buffer(*ln);
                   const T s = o.grad[0] * inv_rows;
                   for (std::size_t i = 0; i < rows; ++i) {
                     for (std::size_t j = 0; j < vocab; ++j) {
                       g[i * vocab + j] += s * (*probs)[i * vocab + j];
                     }
                     g[i * vocab + static_cast<std::size_t>((*tv)[i])] -= s;
                   }
                 });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  require_defined(x, "sum");
  T total = 0;
  for (T v : x.data()) total += v;
  const bool record = should_record<T>({&x});
  auto xn = x.shared_node();
  return emit<T>({1}, {total}, record, [xn](TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    auto& g = grad_buffer(*xn);
    for (auto& v : g) v += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  require_defined(x, "mean");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    const AttentionSpec& spec) {
  require_rank2(q, "attention");
  require_rank2(k, "attention");
  require_rank2(v, "attention");
  const std::size_t batch = spec.batch, heads = spec.heads;
  const std::size_t d = q.dim(1);
  if (batch == 0 || heads == 0 || d % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(d) +
                     " not divisible into " + std::to_string(heads) + " heads");
  }
  if (k.dim(1) != d || v.dim(1) != d || k.dim(0) != v.dim(0)) {
    throw ShapeError("attention: q " + shape_string(q.shape()) + ", k " +
                     shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  if (q.dim(0) % batch != 0 || k.dim(0) % batch != 0) {
    throw ShapeError("attention: rows not divisible by batch " + std::to_string(batch));
  }
  const std::size_t tq = q.dim(0) / batch, tk = k.dim(0) / batch;
  if (spec.causal && tq != tk) {
    throw ShapeError("attention: causal mask needs equal query/key lengths, got " +
                     std::to_string(tq) + " and " + std::to_string(tk));
  }
  const std::size_t dk = d / heads;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(dk));
  const auto eq = static_cast<Eigen::Index>(tq);
  const auto ek = static_cast<Eigen::Index>(tk);
  const auto edk = static_cast<Eigen::Index>(dk);
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));

  // Causal rows are processed in blocks that only touch keys up to the
  // block end; entries beyond a block's key range are never read.
  const std::size_t block = spec.causal ? std::min<std::size_t>(32, tq) : tq;
  // Left uninitialized; see the block comment above.
  std::shared_ptr<T[]> probs(
      static_cast<T*>(::operator new[](batch * heads * tq * tk * sizeof(T),
                                       std::align_val_t{kBufferAlignment})),
      [](T* p) { ::operator delete[](p, std::align_val_t{kBufferAlignment}); });
  Buffer<T> out(q.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t qoff = b * tq * d + h * dk;
      const std::size_t koff = b * tk * d + h * dk;
      MatMap<T> p(probs.get() + (b * heads + h) * tq * tk, eq, ek);
      ConstStridedMap<T> qh(q.data().data() + qoff, eq, edk, stride);
      ConstStridedMap<T> kh(k.data().data() + koff, ek, edk, stride);
      ConstStridedMap<T> vh(v.data().data() + koff, ek, edk, stride);
      StridedMap<T> oh(out.data() + qoff, eq, edk, stride);
      for (std::size_t r0 = 0; r0 < tq; r0 += block) {
        const auto rows = static_cast<Eigen::Index>(std::min(block, tq - r0));
        const auto er0 = static_cast<Eigen::Index>(r0);
        const Eigen::Index kend = spec.causal ? er0 + rows : ek;
        auto pb = p.block(er0, 0, rows, kend);
        pb.noalias() = qh.middleRows(er0, rows) * kh.topRows(kend).transpose();
        pb *= scale_factor;
        for (Eigen::Index i = 0; i < rows; ++i) {
          const Eigen::Index limit = spec.causal ? er0 + i + 1 : kend;
          auto row = pb.row(i).head(limit).array();
          row = (row - row.maxCoeff()).exp();
          row /= row.sum();
          if (limit < kend) pb.row(i).tail(kend - limit).setZero();
        }
        oh.middleRows(er0, rows).noalias() = pb * vh.topRows(kend);
      }
    }
  }
  const bool record = should_record<T>({&q, &k, &v});
  auto qn = q.shared_node();
  auto kn = k.shared_node();
  auto vn = v.shared_node();
  const bool causal = spec.causal;
  return emit<T>(q.shape(), std::move(out), record,
                 [qn, kn, vn, probs, batch, heads, tq, tk, d, dk, block, causal,
                  scale_factor](TensorNode<T>& o) {
                   const auto eq = static_cast<Eigen::Index>(tq);
                   const auto ek = static_cast<Eigen::Index>(tk);
                   const auto edk = static_cast<Eigen::Index>(dk);
                   const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
                   RowMat<T> dp;
                   for (std::size_t b = 0; b < batch; ++b) {
                     for (std::size_t h = 0; h < heads; ++h) {
                       const std::size_t qoff = b * tq * d + h * dk;
                       const std::size_t koff = b * tk * d + h * dk;
                       ConstMatMap<T> p(probs.get() + (b * heads + h) * tq * tk, eq, ek);
                       ConstStridedMap<T> dout(o.grad.data() + qoff, eq, edk, stride);
                       ConstStridedMap<T> qh(qn->value.data() + qoff, eq, edk, stride);
                       ConstStridedMap<T> kh(kn->value.data() + koff, ek, edk, stride);
                       ConstStridedMap<T> vh(vn->value.data() + koff, ek, edk, stride);
                       for (std::size_t r0 = 0; r0 < tq; r0 += block) {
                         const auto rows = static_cast<Eigen::Index>(std::min(block, tq - r0));
                         const auto er0 = static_cast<Eigen::Index>(r0);
                         const Eigen::Index kend = causal ? er0 + rows : ek;
                         const auto pb = p.block(er0, 0, rows, kend);
                         const auto db = dout.middleRows(er0, rows);
                         if (vn->requires_grad) {
                           StridedMap<T>(grad_buffer(*vn).data() + koff, ek, edk, stride)
                               .topRows(kend)
                               .noalias() += pb.transpose() * db;
                         }
                         if (!qn->requires_grad && !kn->requires_grad) continue;
                         dp.noalias() = db * vh.topRows(kend).transpose();
                         // dS = P o (dP - rowsum(dP o P)), folded with the 1/sqrt(dk) scale.
                         const auto dot = (dp.array() * pb.array()).rowwise().sum().eval();
                         dp.array() = pb.array() * (dp.array().colwise() - dot) * scale_factor;
                         if (qn->requires_grad) {
                           StridedMap<T>(grad_buffer(*qn).data() + qoff, eq, edk, stride)
                               .middleRows(er0, rows)
                               .noalias() += dp * kh.topRows(kend);
                         }
                         if (kn->requires_grad) {
                           StridedMap<T>(grad_buffer(*kn).data() + koff, ek, edk, stride)
                               .topRows(kend)
                               .noalias() += dp.transpose() * qh.middleRows(er0, rows);
                         }
                       }
                     }
                   }
                 });
}

#define CSG_INSTANTIATE_TENSOR(T)                                                 \
  template class Tensor<T>;                                                       \
  template class GradTape<T>;                                                     \
  template class TapeScope<T>;                                                    \
  template class NoGradGuard<T>;                                                  \
  template GradTape<T>* active_tape<T>();                                         \
  template void backward<T>(const Tensor<T>&);                                    \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                               \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                          \
  template Tensor<T> rsub_scalar<T>(T, const Tensor<T>&);                         \
  template Tensor<T> add_bias<T>(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> scale_rows<T>(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> sqrt<T>(const Tensor<T>&);                                   \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                \
  template Tensor<T> clamp<T>(const Tensor<T>&, T, T);                            \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                   \
  template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);                   \
  template Tensor<T> concat_last<T>(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> layernorm<T>(const Tensor<T>&, const Tensor<T>&,             \
                                  const Tensor<T>&, T);                           \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, Rng&, bool);            \
  template Tensor<T> embedding_lookup<T>(const Tensor<T>&, std::span<const int>); \
  template Tensor<T> cross_entropy<T>(const Tensor<T>&, std::span<const int>);    \
  template Tensor<T> sum<T>(const Tensor<T>&);                                    \
  template Tensor<T> mean<T>(const Tensor<T>&);                                   \
  template Tensor<T> attention<T>(const Tensor<T>&, const Tensor<T>&,             \
                                  const Tensor<T>&, const AttentionSpec&);

CSG_INSTANTIATE_TENSOR(float)
CSG_INSTANTIATE_TENSOR(double)

#undef CSG_INSTANTIATE_TENSOR

}  // namespace csg
