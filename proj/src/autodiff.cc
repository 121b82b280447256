// SPDX-License-Identifier: Apache-2.0

#include "biortd/autodiff.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <utility>

namespace biortd::ad {

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

[[noreturn]] void ThrowShape(const std::string& op, const Shape& a,
                             const Shape& b) {
  throw ShapeError(op + ": incompatible shapes " + ShapeToString(a) + " and " +
                   ShapeToString(b));
}

template <typename T>
thread_local Tape<T>* active_tape = nullptr;

template <typename T>
bool ShouldRecord(std::initializer_list<const Tensor<T>*> inputs) {
  if (active_tape<T> == nullptr) return false;
  for (const Tensor<T>* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
std::shared_ptr<Node<T>> NewNode(Shape shape) {
  auto node = std::make_shared<Node<T>>();
  node->value.assign(static_cast<size_t>(NumElements(shape)), T(0));
  node->shape = std::move(shape);
  return node;
}

// Attaches the backward closure and records the node when a tape wants it.
template <typename T>
Tensor<T> Finish(std::shared_ptr<Node<T>> out, bool record,
                 std::function<void(Node<T>&)> backward) {
  if (record) {
    out->requires_grad = true;
    out->backward = std::move(backward);
    active_tape<T>->Record(out);
  }
  return Tensor<T>(std::move(out));
}

template <typename T>
std::vector<T>* GradOf(const std::shared_ptr<Node<T>>& node) {
  if (!node->requires_grad) return nullptr;
  node->EnsureGrad();
  return &node->grad;
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::Zeros(Shape shape, bool requires_grad) {
  auto node = NewNode<T>(std::move(shape));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::Full(Shape shape, T fill, bool requires_grad) {
  Tensor t = Zeros(std::move(shape), requires_grad);
  std::fill(t.node_->value.begin(), t.node_->value.end(), fill);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::FromVector(Shape shape, std::vector<T> values,
                                bool requires_grad) {
  if (NumElements(shape) != static_cast<int64_t>(values.size())) {
    throw ShapeError("FromVector: shape " + ShapeToString(shape) + " needs " +
                     std::to_string(NumElements(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
int64_t Tensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw std::out_of_range("axis " + std::to_string(axis) +
                            " out of range for shape " +
                            ShapeToString(shape()));
  }
  return node_->shape[static_cast<size_t>(axis)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor of shape " + ShapeToString(shape()) +
                     " is not a scalar");
  }
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::Detached() const {
  return FromVector(shape(), node_->value, false);
}

// ---- Tape -----------------------------------------------------------------

template <typename T>
void Tape<T>::Record(std::shared_ptr<Node<T>> node) {
  if (consumed_) {
    throw std::logic_error("tape already consumed by a backward pass");
  }
  members_.insert(node.get());
  entries_.push_back(std::move(node));
}

template <typename T>
void Tape<T>::Backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? ShapeToString(loss.shape())
                                     : std::string("<undefined>")));
  }
  if (consumed_) {
    throw std::logic_error("backward: tape already consumed");
  }
  consumed_ = true;
  if (!loss.requires_grad()) return;
  Node<T>* root = loss.node().get();
  if (root->backward && !members_.contains(root)) {
    throw std::logic_error("backward: loss was not produced under this tape");
  }
  root->EnsureGrad();
  root->grad[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    Node<T>& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
  }
}

template <typename T>
void Tape<T>::Clear() {
  entries_.clear();
  members_.clear();
  consumed_ = false;
}

template <typename T>
Tape<T>* ActiveTape() {
  return active_tape<T>;
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(active_tape<T>) {
  active_tape<T> = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  active_tape<T> = previous_;
}

// ---- primitives -----------------------------------------------------------

template <typename T>
Tensor<T> MatMul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  if (a.rank() < 2 || b.rank() < 2) ThrowShape("matmul", a.shape(), b.shape());
  const int64_t m = a.dim(-2);
  const int64_t k = a.dim(-1);
  const int64_t b_rows = b.dim(-2);
  const int64_t b_cols = b.dim(-1);
  const int64_t kb = transpose_b ? b_cols : b_rows;
  const int64_t n = transpose_b ? b_rows : b_cols;
  if (kb != k) ThrowShape("matmul", a.shape(), b.shape());
  const bool shared_b = b.rank() == 2;
  if (!shared_b) {
    if (b.rank() != a.rank() ||
        !std::equal(a.shape().begin(), a.shape().end() - 2,
                    b.shape().begin())) {
      ThrowShape("matmul", a.shape(), b.shape());
    }
  }
  const int64_t batch = a.numel() / (m * k);
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  auto out = NewNode<T>(std::move(out_shape));

  auto a_node = a.node();
  auto b_node = b.node();
  // With a shared right operand the leading dims fold into M.
  const int64_t groups = shared_b ? 1 : batch;
  const int64_t rows = shared_b ? batch * m : m;
  for (int64_t g = 0; g < groups; ++g) {
    ConstMatrixMap<T> am(a_node->value.data() + g * rows * k, rows, k);
    ConstMatrixMap<T> bm(b_node->value.data() + g * b_rows * b_cols, b_rows,
                         b_cols);
    MatrixMap<T> cm(out->value.data() + g * rows * n, rows, n);
    if (transpose_b) {
      cm.noalias() = am * bm.transpose();
    } else {
      cm.noalias() = am * bm;
    }
  }
  const bool record = ShouldRecord<T>({&a, &b});
  return Finish<T>(out, record, [=](Node<T>& self) {
    std::vector<T>* ga = GradOf(a_node);
    std::vector<T>* gb = GradOf(b_node);
    for (int64_t g = 0; g < groups; ++g) {
      ConstMatrixMap<T> dc(self.grad.data() + g * rows * n, rows, n);
      ConstMatrixMap<T> bm(b_node->value.data() + g * b_rows * b_cols, b_rows,
                           b_cols);
      if (ga) {
        MatrixMap<T> da(ga->data() + g * rows * k, rows, k);
        if (transpose_b) {
          da.noalias() += dc * bm;
        } else {
          da.noalias() += dc * bm.transpose();
        }
      }
      if (gb) {
        ConstMatrixMap<T> am(a_node->value.data() + g * rows * k, rows, k);
        MatrixMap<T> db(gb->data() + g * b_rows * b_cols, b_rows, b_cols);
        if (transpose_b) {
          db.noalias() += dc.transpose() * am;
        } else {
          db.noalias() += am.transpose() * dc;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (bs.size() > as.size() ||
      !std::equal(bs.rbegin(), bs.rend(), as.rbegin())) {
    ThrowShape("add", as, bs);
  }
  auto out = NewNode<T>(as);
  const int64_t inner = b.numel();
  const int64_t outer = inner == 0 ? 0 : a.numel() / inner;
  auto a_node = a.node();
  auto b_node = b.node();
  for (int64_t o = 0; o < outer; ++o) {
    const T* ap = a_node->value.data() + o * inner;
    T* op = out->value.data() + o * inner;
    for (int64_t i = 0; i < inner; ++i) op[i] = ap[i] + b_node->value[i];
  }
  const bool record = ShouldRecord<T>({&a, &b});
  return Finish<T>(out, record, [=](Node<T>& self) {
    if (std::vector<T>* ga = GradOf(a_node)) {
      for (size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
    }
    if (std::vector<T>* gb = GradOf(b_node)) {
      for (int64_t o = 0; o < outer; ++o) {
        const T* gp = self.grad.data() + o * inner;
        for (int64_t i = 0; i < inner; ++i) (*gb)[i] += gp[i];
      }
    }
  });
}

template <typename T>
Tensor<T> Mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) ThrowShape("mul", a.shape(), b.shape());
  auto out = NewNode<T>(a.shape());
  auto a_node = a.node();
  auto b_node = b.node();
  for (size_t i = 0; i < out->value.size(); ++i) {
    out->value[i] = a_node->value[i] * b_node->value[i];
  }
  const bool record = ShouldRecord<T>({&a, &b});
  return Finish<T>(out, record, [=](Node<T>& self) {
    if (std::vector<T>* ga = GradOf(a_node)) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        (*ga)[i] += self.grad[i] * b_node->value[i];
      }
    }
    if (std::vector<T>* gb = GradOf(b_node)) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        (*gb)[i] += self.grad[i] * a_node->value[i];
      }
    }
  });
}

template <typename T>
Tensor<T> Scale(const Tensor<T>& a, T factor) {
  auto out = NewNode<T>(a.shape());
  auto a_node = a.node();
  for (size_t i = 0; i < out->value.size(); ++i) {
    out->value[i] = a_node->value[i] * factor;
  }
  const bool record = ShouldRecord<T>({&a});
  return Finish<T>(out, record, [=](Node<T>& self) {
    if (std::vector<T>* ga = GradOf(a_node)) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        (*ga)[i] += self.grad[i] * factor;
      }
    }
  });
}

template <typename T>
Tensor<T> Linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  return Add(MatMul(x, weight), bias);
}

template <typename T>
Tensor<T> Gelu(const Tensor<T>& x) {
  auto out = NewNode<T>(x.shape());
  auto x_node = x.node();
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  for (size_t i = 0; i < out->value.size(); ++i) {
    const double v = x_node->value[i];
    out->value[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
  }
  const bool record = ShouldRecord<T>({&x});
  return Finish<T>(out, record, [=](Node<T>& self) {
    std::vector<T>* gx = GradOf(x_node);
    if (!gx) return;
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double v = x_node->value[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      (*gx)[i] += static_cast<T>(self.grad[i] * (cdf + v * pdf));
    }
  });
}

template <typename T>
Tensor<T> Tanh(const Tensor<T>& x) {
  auto out = NewNode<T>(x.shape());
  auto x_node = x.node();
  for (size_t i = 0; i < out->value.size(); ++i) {
    out->value[i] = std::tanh(x_node->value[i]);
  }
  const bool record = ShouldRecord<T>({&x});
  auto out_raw = out.get();
  return Finish<T>(out, record, [=](Node<T>& self) {
    std::vector<T>* gx = GradOf(x_node);
    if (!gx) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const T y = out_raw->value[i];
      (*gx)[i] += self.grad[i] * (T(1) - y * y);
    }
  });
}

template <typename T>
Tensor<T> Softmax(const Tensor<T>& x) {
  if (x.rank() < 1) ThrowShape("softmax", x.shape(), x.shape());
  const int64_t width = x.dim(-1);
  const int64_t rows = width == 0 ? 0 : x.numel() / width;
  auto out = NewNode<T>(x.shape());
  auto x_node = x.node();
  for (int64_t r = 0; r < rows; ++r) {
    const T* in = x_node->value.data() + r * width;
    T* o = out->value.data() + r * width;
    T mx = -std::numeric_limits<T>::infinity();
    for (int64_t j = 0; j < width; ++j) mx = std::max(mx, in[j]);
    if (mx == -std::numeric_limits<T>::infinity()) continue;  // all masked
    double total = 0.0;
    for (int64_t j = 0; j < width; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    const T inv = static_cast<T>(1.0 / total);
    for (int64_t j = 0; j < width; ++j) o[j] *= inv;
  }
  const bool record = ShouldRecord<T>({&x});
  Node<T>* out_raw = out.get();
  return Finish<T>(out, record, [=](Node<T>& self) {
    std::vector<T>* gx = GradOf(x_node);
    if (!gx) return;
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = out_raw->value.data() + r * width;
      const T* dy = self.grad.data() + r * width;
      T* dx = gx->data() + r * width;
      double dot = 0.0;
      for (int64_t j = 0; j < width; ++j) dot += dy[j] * y[j];
      for (int64_t j = 0; j < width; ++j) {
        dx[j] += y[j] * (dy[j] - static_cast<T>(dot));
      }
    }
  });
}

template <typename T>
Tensor<T> LayerNorm(const Tensor<T>& x, const Tensor<T>& gain,
                    const Tensor<T>& bias, double epsilon) {
  const int64_t width = x.dim(-1);
  if (gain.numel() != width || bias.numel() != width) {
    ThrowShape("layer_norm", x.shape(), gain.shape());
  }
  const int64_t rows = width == 0 ? 0 : x.numel() / width;
  auto out = NewNode<T>(x.shape());
  auto x_node = x.node();
  auto g_node = gain.node();
  auto b_node = bias.node();
  auto normalized = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const T* in = x_node->value.data() + r * width;
    double mean = 0.0;
    for (int64_t j = 0; j < width; ++j) mean += in[j];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (int64_t j = 0; j < width; ++j) {
      const double d = in[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(width);
    const double istd = 1.0 / std::sqrt(var + epsilon);
    (*inv_std)[r] = static_cast<T>(istd);
    T* xh = normalized->data() + r * width;
    T* o = out->value.data() + r * width;
    for (int64_t j = 0; j < width; ++j) {
      xh[j] = static_cast<T>((in[j] - mean) * istd);
      o[j] = xh[j] * g_node->value[j] + b_node->value[j];
    }
  }
  const bool record = ShouldRecord<T>({&x, &gain, &bias});
  return Finish<T>(out, record, [=](Node<T>& self) {
    std::vector<T>* gx = GradOf(x_node);
    std::vector<T>* gg = GradOf(g_node);
    std::vector<T>* gb = GradOf(b_node);
    std::vector<T> dxhat(width);
    for (int64_t r = 0; r < rows; ++r) {
      const T* dy = self.grad.data() + r * width;
      const T* xh = normalized->data() + r * width;
      double sum_d = 0.0;
      double sum_dx = 0.0;
      for (int64_t j = 0; j < width; ++j) {
        if (gg) (*gg)[j] += dy[j] * xh[j];
        if (gb) (*gb)[j] += dy[j];
        dxhat[j] = dy[j] * g_node->value[j];
        sum_d += dxhat[j];
        sum_dx += dxhat[j] * xh[j];
      }
      if (!gx) continue;
      const double mean_d = sum_d / static_cast<double>(width);
      const double mean_dx = sum_dx / static_cast<double>(width);
      T* dx = gx->data() + r * width;
      const double istd = (*inv_std)[r];
      for (int64_t j = 0; j < width; ++j) {
        dx[j] += static_cast<T>(istd * (dxhat[j] - mean_d - xh[j] * mean_dx));
      }
    }
  });
}

template <typename T>
Tensor<T> Dropout(const Tensor<T>& x, double rate, Rng* rng, bool train) {
  if (!train || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  if (rng == nullptr) throw std::invalid_argument("dropout needs an rng");
  auto out = NewNode<T>(x.shape());
  auto x_node = x.node();
  auto keep = std::make_shared<std::vector<T>>(x.numel());
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (size_t i = 0; i < keep->size(); ++i) {
    (*keep)[i] = rng->Uniform() < rate ? T(0) : scale;
    out->value[i] = x_node->value[i] * (*keep)[i];
  }
  const bool record = ShouldRecord<T>({&x});
  return Finish<T>(out, record, [=](Node<T>& self) {
    if (std::vector<T>* gx = GradOf(x_node)) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        (*gx)[i] += self.grad[i] * (*keep)[i];
      }
    }
  });
}

template <typename T>
Tensor<T> Embedding(const Tensor<T>& table, std::span<const int32_t> ids,
                    const Shape& prefix) {
  if (table.rank() != 2 ||
      NumElements(prefix) != static_cast<int64_t>(ids.size())) {
    ThrowShape("embedding", table.shape(), prefix);
  }
  const int64_t vocab = table.dim(0);
  const int64_t width = table.dim(1);
  Shape out_shape = prefix;
  out_shape.push_back(width);
  auto out = NewNode<T>(std::move(out_shape));
  auto t_node = table.node();
  auto id_copy = std::make_shared<std::vector<int32_t>>(ids.begin(), ids.end());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) +
                              " at position " + std::to_string(i) +
                              " outside [0, " + std::to_string(vocab) + ")");
    }
    std::copy_n(t_node->value.data() + ids[i] * width, width,
                out->value.data() + static_cast<int64_t>(i) * width);
  }
  const bool record = ShouldRecord<T>({&table});
  return Finish<T>(out, record, [=](Node<T>& self) {
    std::vector<T>* gt = GradOf(t_node);
    if (!gt) return;
    for (size_t i = 0; i < id_copy->size(); ++i) {
      const T* src = self.grad.data() + static_cast<int64_t>(i) * width;
      T* dst = gt->data() + static_cast<int64_t>((*id_copy)[i]) * width;
      for (int64_t j = 0; j < width; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Tensor<T> GatherRows(const Tensor<T>& x, std::span<const int64_t> rows) {
  if (x.rank() != 2) ThrowShape("gather_rows", x.shape(), {});
  const int64_t n = x.dim(0);
  const int64_t width = x.dim(1);
  auto out = NewNode<T>({static_cast<int64_t>(rows.size()), width});
  auto x_node = x.node();
  auto row_copy = std::make_shared<std::vector<int64_t>>(rows.begin(), rows.end());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= n) {
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) +
                              " outside [0, " + std::to_string(n) + ")");
    }
    std::copy_n(x_node->value.data() + rows[i] * width, width,
                out->value.data() + static_cast<int64_t>(i) * width);
  }
  const bool record = ShouldRecord<T>({&x});
  return Finish<T>(out, record, [=](Node<T>& self) {
    std::vector<T>* gx = GradOf(x_node);
    if (!gx) return;
    for (size_t i = 0; i < row_copy->size(); ++i) {
      const T* src = self.grad.data() + static_cast<int64_t>(i) * width;
      T* dst = gx->data() + (*row_copy)[i] * width;
      for (int64_t j = 0; j < width; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Tensor<T> CrossEntropy(const Tensor<T>& logits,
                       std::span<const int32_t> targets) {
  if (logits.rank() != 2 ||
      logits.dim(0) != static_cast<int64_t>(targets.size())) {
    ThrowShape("cross_entropy", logits.shape(),
               {static_cast<int64_t>(targets.size())});
  }
  const int64_t rows = logits.dim(0);
  const int64_t classes = logits.dim(1);
  auto l_node = logits.node();
  auto probs = std::make_shared<std::vector<T>>(logits.numel());
  auto tgt = std::make_shared<std::vector<int32_t>>(targets.begin(), targets.end());
  double total = 0.0;
  int64_t count = 0;
  for (int64_t r = 0; r < rows; ++r) {
    const int32_t y = targets[static_cast<size_t>(r)];
    if (y < 0) continue;
    if (y >= classes) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(y) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
    const T* in = l_node->value.data() + r * classes;
    T* p = probs->data() + r * classes;
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < classes; ++c) mx = std::max<double>(mx, in[c]);
    double z = 0.0;
    for (int64_t c = 0; c < classes; ++c) z += std::exp(in[c] - mx);
    const double log_z = mx + std::log(z);
    for (int64_t c = 0; c < classes; ++c) {
      p[c] = static_cast<T>(std::exp(in[c] - log_z));
    }
    total += log_z - in[y];
    ++count;
  }
  auto out = NewNode<T>({});
  out->value[0] = count ? static_cast<T>(total / static_cast<double>(count)) : T(0);
  const bool record = ShouldRecord<T>({&logits}) && count > 0;
  return Finish<T>(out, record, [=](Node<T>& self) {
    std::vector<T>* gl = GradOf(l_node);
    if (!gl) return;
    const T scale = self.grad[0] / static_cast<T>(count);
    for (int64_t r = 0; r < rows; ++r) {
      const int32_t y = (*tgt)[static_cast<size_t>(r)];
      if (y < 0) continue;
      const T* p = probs->data() + r * classes;
      T* d = gl->data() + r * classes;
      for (int64_t c = 0; c < classes; ++c) d[c] += scale * p[c];
      d[y] -= scale;
    }
  });
}

template <typename T>
Tensor<T> BinaryCrossEntropy(const Tensor<T>& logits,
                             std::span<const int32_t> targets) {
  if (logits.numel() != static_cast<int64_t>(targets.size())) {
    ThrowShape("binary_cross_entropy", logits.shape(),
               {static_cast<int64_t>(targets.size())});
  }
  auto l_node = logits.node();
  auto tgt = std::make_shared<std::vector<int32_t>>(targets.begin(), targets.end());
  double total = 0.0;
  int64_t count = 0;
  for (size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0) continue;
    const double x = l_node->value[i];
    const double y = targets[i] > 0 ? 1.0 : 0.0;
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    ++count;
  }
  auto out = NewNode<T>({});
  out->value[0] = count ? static_cast<T>(total / static_cast<double>(count)) : T(0);
  const bool record = ShouldRecord<T>({&logits}) && count > 0;
  return Finish<T>(out, record, [=](Node<T>& self) {
    std::vector<T>* gl = GradOf(l_node);
    if (!gl) return;
    const double scale = self.grad[0] / static_cast<double>(count);
    for (size_t i = 0; i < tgt->size(); ++i) {
      if ((*tgt)[i] < 0) continue;
      const double x = l_node->value[i];
      const double sig = 1.0 / (1.0 + std::exp(-x));
      const double y = (*tgt)[i] > 0 ? 1.0 : 0.0;
      (*gl)[i] += static_cast<T>(scale * (sig - y));
    }
  });
}

template <typename T>
Tensor<T> MaskedMean(const Tensor<T>& x, std::span<const T> mask) {
  if (x.numel() != static_cast<int64_t>(mask.size())) {
    ThrowShape("masked_mean", x.shape(), {static_cast<int64_t>(mask.size())});
  }
  auto x_node = x.node();
  auto m = std::make_shared<std::vector<T>>(mask.begin(), mask.end());
  double num = 0.0;
  double den = 0.0;
  for (size_t i = 0; i < mask.size(); ++i) {
    num += static_cast<double>(x_node->value[i]) * mask[i];
    den += mask[i];
  }
  auto out = NewNode<T>({});
  out->value[0] = den != 0.0 ? static_cast<T>(num / den) : T(0);
  const bool record = ShouldRecord<T>({&x}) && den != 0.0;
  return Finish<T>(out, record, [=](Node<T>& self) {
    if (std::vector<T>* gx = GradOf(x_node)) {
      const T scale = static_cast<T>(self.grad[0] / den);
      for (size_t i = 0; i < m->size(); ++i) (*gx)[i] += scale * (*m)[i];
    }
  });
}

template <typename T>
Tensor<T> Sum(const Tensor<T>& x) {
  auto x_node = x.node();
  double total = 0.0;
  for (T v : x_node->value) total += v;
  auto out = NewNode<T>({});
  out->value[0] = static_cast<T>(total);
  const bool record = ShouldRecord<T>({&x});
  return Finish<T>(out, record, [=](Node<T>& self) {
    if (std::vector<T>* gx = GradOf(x_node)) {
      for (T& g : *gx) g += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> Reshape(const Tensor<T>& x, Shape shape) {
  if (NumElements(shape) != x.numel()) ThrowShape("reshape", x.shape(), shape);
  auto x_node = x.node();
  auto out = std::make_shared<Node<T>>();
  out->shape = std::move(shape);
  out->value = x_node->value;
  const bool record = ShouldRecord<T>({&x});
  return Finish<T>(out, record, [=](Node<T>& self) {
    if (std::vector<T>* gx = GradOf(x_node)) {
      for (size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> SwapMiddleAxes(const Tensor<T>& x) {
  if (x.rank() != 4) ThrowShape("swap_middle_axes", x.shape(), {});
  const int64_t a = x.dim(0), b = x.dim(1), c = x.dim(2), d = x.dim(3);
  auto out = NewNode<T>({a, c, b, d});
  auto x_node = x.node();
  for (int64_t i = 0; i < a; ++i) {
    for (int64_t j = 0; j < b; ++j) {
      for (int64_t k = 0; k < c; ++k) {
        std::copy_n(x_node->value.data() + ((i * b + j) * c + k) * d, d,
                    out->value.data() + ((i * c + k) * b + j) * d);
      }
    }
  }
  const bool record = ShouldRecord<T>({&x});
  return Finish<T>(out, record, [=](Node<T>& self) {
    std::vector<T>* gx = GradOf(x_node);
    if (!gx) return;
    for (int64_t i = 0; i < a; ++i) {
      for (int64_t j = 0; j < b; ++j) {
        for (int64_t k = 0; k < c; ++k) {
          const T* src = self.grad.data() + ((i * c + k) * b + j) * d;
          T* dst = gx->data() + ((i * b + j) * c + k) * d;
          for (int64_t e = 0; e < d; ++e) dst[e] += src[e];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> AddKeyMask(const Tensor<T>& scores,
                     std::span<const int32_t> key_mask) {
  if (scores.rank() != 4 ||
      scores.dim(0) * scores.dim(3) != static_cast<int64_t>(key_mask.size())) {
    ThrowShape("add_key_mask", scores.shape(),
               {static_cast<int64_t>(key_mask.size())});
  }
  const int64_t batch = scores.dim(0);
  const int64_t rows = scores.dim(1) * scores.dim(2);
  const int64_t keys = scores.dim(3);
  auto out = NewNode<T>(scores.shape());
  auto s_node = scores.node();
  out->value = s_node->value;
  const T neg_inf = -std::numeric_limits<T>::infinity();
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t r = 0; r < rows; ++r) {
      T* row = out->value.data() + (b * rows + r) * keys;
      for (int64_t k = 0; k < keys; ++k) {
        if (key_mask[static_cast<size_t>(b * keys + k)] == 0) row[k] = neg_inf;
      }
    }
  }
  const bool record = ShouldRecord<T>({&scores});
  return Finish<T>(out, record, [=](Node<T>& self) {
    if (std::vector<T>* gs = GradOf(s_node)) {
      for (size_t i = 0; i < self.grad.size(); ++i) (*gs)[i] += self.grad[i];
    }
  });
}

#define BIORTD_INSTANTIATE(T)                                                  \
  template class Tensor<T>;                                                    \
  template class Tape<T>;                                                      \
  template class TapeScope<T>;                                                 \
  template Tape<T>* ActiveTape<T>();                                           \
  template Tensor<T> MatMul(const Tensor<T>&, const Tensor<T>&, bool);         \
  template Tensor<T> Add(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> Mul(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> Scale(const Tensor<T>&, T);                               \
  template Tensor<T> Linear(const Tensor<T>&, const Tensor<T>&,                \
                            const Tensor<T>&);                                 \
  template Tensor<T> Gelu(const Tensor<T>&);                                   \
  template Tensor<T> Tanh(const Tensor<T>&);                                   \
  template Tensor<T> Softmax(const Tensor<T>&);                                \
  template Tensor<T> LayerNorm(const Tensor<T>&, const Tensor<T>&,             \
                               const Tensor<T>&, double);                      \
  template Tensor<T> Dropout(const Tensor<T>&, double, Rng*, bool);            \
  template Tensor<T> Embedding(const Tensor<T>&, std::span<const int32_t>,     \
                               const Shape&);                                  \
  template Tensor<T> GatherRows(const Tensor<T>&, std::span<const int64_t>);   \
  template Tensor<T> CrossEntropy(const Tensor<T>&, std::span<const int32_t>); \
  template Tensor<T> BinaryCrossEntropy(const Tensor<T>&,                      \
                                        std::span<const int32_t>);             \
  template Tensor<T> MaskedMean(const Tensor<T>&, std::span<const T>);         \
  template Tensor<T> Sum(const Tensor<T>&);                                    \
  template Tensor<T> Reshape(const Tensor<T>&, Shape);                         \
  template Tensor<T> SwapMiddleAxes(const Tensor<T>&);                         \
  template Tensor<T> AddKeyMask(const Tensor<T>&, std::span<const int32_t>);

BIORTD_INSTANTIATE(float)
BIORTD_INSTANTIATE(double)

#undef BIORTD_INSTANTIATE

}  // namespace biortd::ad
