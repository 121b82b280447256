// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// Every primitive below computes its value eagerly. When a Tape is active on
// the calling thread (see TapeScope) and at least one input requires a
// gradient, the primitive also appends a backward closure to that tape.
// Tape::Backward replays the closures in reverse order, accumulating into the
// `grad` buffers of every node that requires one. Leaves that never receive a
// contribution keep an all-zero gradient.
//
// All primitives are instantiated for float (training) and double (gradient
// checks).

#ifndef BIORTD_AUTODIFF_H_
#define BIORTD_AUTODIFF_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "biortd/rng.h"

namespace biortd::ad {

using Shape = std::vector<int64_t>;

int64_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::function<void(Node&)> backward;

  void EnsureGrad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Full(Shape shape, T fill, bool requires_grad = false);
  static Tensor FromVector(Shape shape, std::vector<T> values,
                           bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  // Negative axes count from the end.
  int64_t dim(int axis) const;
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Empty span when no gradient has been accumulated yet.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->EnsureGrad();
    return node_->grad;
  }
  void ZeroGrad() { node_->grad.clear(); }

  // A new leaf holding a copy of the values, cut off from any tape.
  Tensor Detached() const;

  bool SharesStorageWith(const Tensor& other) const {
    return node_ == other.node_;
  }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
class Tape {
 public:
  void Record(std::shared_ptr<Node<T>> node);
  size_t size() const { return entries_.size(); }

  // Seeds d(loss)/d(loss) = 1 and runs the recorded closures in reverse.
  // A tape supports a single backward pass; Clear() makes it reusable.
  void Backward(const Tensor<T>& loss);
  void Clear();

 private:
  std::vector<std::shared_ptr<Node<T>>> entries_;
  std::unordered_set<const Node<T>*> members_;
  bool consumed_ = false;
};

template <typename T>
Tape<T>* ActiveTape();

// Makes `tape` the active tape of this thread for the scope's lifetime.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

// ---- primitives -----------------------------------------------------------

// a: [..., M, K]. b: [K, N] (shared across the leading dims of a) or
// [..., K, N] with the same leading dims. With transpose_b, b is read as
// [..., N, K].
template <typename T>
Tensor<T> MatMul(const Tensor<T>& a, const Tensor<T>& b,
                 bool transpose_b = false);

// Elementwise sum. b must have a's shape or a suffix of it (broadcast over
// the leading dims of a).
template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise product of equally shaped tensors.
template <typename T>
Tensor<T> Mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> Scale(const Tensor<T>& a, T factor);

// x @ weight + bias.
template <typename T>
Tensor<T> Linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias);

// Exact (erf) GELU.
template <typename T>
Tensor<T> Gelu(const Tensor<T>& x);

template <typename T>
Tensor<T> Tanh(const Tensor<T>& x);

// Softmax over the last axis. Rows whose entries are all -inf yield zeros.
template <typename T>
Tensor<T> Softmax(const Tensor<T>& x);

// Per-position normalization over the last axis with learned gain and bias.
template <typename T>
Tensor<T> LayerNorm(const Tensor<T>& x, const Tensor<T>& gain,
                    const Tensor<T>& bias, double epsilon = 1e-12);

// Inverted dropout. Identity when !train or rate == 0.
template <typename T>
Tensor<T> Dropout(const Tensor<T>& x, double rate, Rng* rng, bool train);

// Rows of table [V, E] selected by ids; result shape is prefix + [E].
template <typename T>
Tensor<T> Embedding(const Tensor<T>& table, std::span<const int32_t> ids,
                    const Shape& prefix);

// Rows of x [N, D] at the given indices -> [k, D].
template <typename T>
Tensor<T> GatherRows(const Tensor<T>& x, std::span<const int64_t> rows);

// Mean categorical cross-entropy of logits [N, C] against class targets.
// Targets < 0 are ignored. Zero when nothing is selected.
template <typename T>
Tensor<T> CrossEntropy(const Tensor<T>& logits,
                       std::span<const int32_t> targets);

// Mean binary cross-entropy of logits (any shape, one logit per element)
// against {0, 1} targets; targets < 0 are ignored.
template <typename T>
Tensor<T> BinaryCrossEntropy(const Tensor<T>& logits,
                             std::span<const int32_t> targets);

// sum(x * mask) / sum(mask); mask is a constant of x's size.
template <typename T>
Tensor<T> MaskedMean(const Tensor<T>& x, std::span<const T> mask);

template <typename T>
Tensor<T> Sum(const Tensor<T>& x);

template <typename T>
Tensor<T> Reshape(const Tensor<T>& x, Shape shape);

// [A, B, C, D] -> [A, C, B, D].
template <typename T>
Tensor<T> SwapMiddleAxes(const Tensor<T>& x);

// scores: [B, H, Tq, Tk]; key_mask: B*Tk entries, 0 marks a padded key whose
// score becomes -inf.
template <typename T>
Tensor<T> AddKeyMask(const Tensor<T>& scores,
                     std::span<const int32_t> key_mask);

}  // namespace biortd::ad

#endif  // BIORTD_AUTODIFF_H_
