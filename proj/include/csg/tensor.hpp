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

// Dense tensors with a reverse-mode gradient tape.
//
// A Tensor is a shared handle onto a node holding row-major values and an
// optional gradient accumulator. Operations record themselves on the
// thread's active GradTape (see TapeScope) when at least one input requires
// a gradient; with no active tape nothing is recorded, which is the
// inference path. Broadcasting is limited to tensor-with-scalar plus the two
// explicit row/column helpers add_bias and scale_rows.

#ifndef CSG_TENSOR_HPP_
#define CSG_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace csg {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

// Cache-line aligned storage. Vectorized kernels peel a different number of
// leading elements depending on the start address, and the peeled elements
// take a scalar path, so a fixed alignment keeps results bitwise stable from
// run to run.
inline constexpr std::size_t kBufferAlignment = 64;

template <typename T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kBufferAlignment}));
  }
  void deallocate(T* p, std::size_t) {
    ::operator delete(p, std::align_val_t{kBufferAlignment});
  }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;  // empty until first accumulation
  bool requires_grad = false;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data,
                          bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  // Writing through this on a tensor that already took part in a recorded
  // op invalidates that op's backward; intended for leaves and test setup.
  std::span<T> mutable_data() { return node_->value; }
  T item() const;
  T at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad();  // allocates zeros if absent
  void zero_grad();

  // Value copy with no gradient history.
  Tensor detach() const;

  TensorNode<T>* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode<T>>& shared_node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// Ordered record of differentiable operations. backward() replays the
// record in reverse, which is a valid reverse topological order because
// every entry is appended after all of its inputs exist.
template <typename T>
class GradTape {
 public:
  using BackwardFn = std::function<void(TensorNode<T>& out)>;

  void record(std::shared_ptr<TensorNode<T>> out, BackwardFn fn);
  void backward(const Tensor<T>& loss);
  void reset() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::shared_ptr<TensorNode<T>> out;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

template <typename T>
GradTape<T>* active_tape();

// Installs a tape as the thread's active tape for the scope's lifetime.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(GradTape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape<T>* previous_;
};

// Clears the active tape for its lifetime so ops record nothing.
template <typename T>
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  GradTape<T>* previous_;
};

// Backpropagates through the active tape. Throws ContractError when the
// loss is not a scalar or no tape is active.
template <typename T>
void backward(const Tensor<T>& loss);

// ---- primitives ----------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset);
// offset - x
template <typename T>
Tensor<T> rsub_scalar(T offset, const Tensor<T>& x);

// x[m x n] + bias[n] on every row.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);
// x[m x n] * w[m x 1]: row i scaled by w[i].
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, const Tensor<T>& w);

inline constexpr double kSqrtEpsilon = 1e-12;
inline constexpr double kSigmoidEpsilon = 1e-12;

// sqrt(max(x, 1e-12)); the clamp also bounds the backward slope.
template <typename T>
Tensor<T> sqrt(const Tensor<T>& x);
// Logistic function kept inside [1e-12, 1 - 1e-12].
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

// [m x p] ++ [m x q] -> [m x (p + q)]
template <typename T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, T eps = T(1e-5));

// Inverted dropout. Identity when p == 0 or when not training.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, bool training);

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const int> ids);

// Mean over rows of -log softmax(logits)[row, target[row]].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// Multi-head scaled dot-product attention over `batch` independent
// sequences stacked along rows. q is [batch*tq x dim], k and v are
// [batch*tk x dim]; dim is split evenly across heads and each head's
// output lands in its own column block. With `causal`, query i sees keys
// j <= i (requires tq == tk).
struct AttentionSpec {
  std::size_t batch = 1;
  std::size_t heads = 1;
  bool causal = false;
};

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    const AttentionSpec& spec);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
// Elementwise (Hadamard) product; use matmul for matrix products.
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

}  // namespace csg

#endif  // CSG_TENSOR_HPP_
