#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "core/common.hpp"

namespace dman {

using Shape = std::vector<size_t>;

size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until a backward pass touches this node

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Value-semantic handle to a dense row-major float64 tensor. Copies share the
// underlying node; fresh storage only comes from the factory functions.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  size_t rank() const { return node_->shape.size(); }
  size_t size() const { return node_->data.size(); }
  size_t extent(size_t axis) const { return node_->shape.at(axis); }

  std::span<const double> values() const { return node_->data; }
  std::span<double> mutable_values() { return node_->data; }

  double at(size_t flat) const { return node_->data[flat]; }
  double at(size_t row, size_t col) const;

  // Scalar accessor; size must be 1.
  double value() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  bool all_finite() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode> node_;
};

// Records the forward op sequence of one differentiable graph and replays it
// in reverse on backward(). Recording order is a valid topological order by
// construction: operands must exist before the op that consumes them.
//
// One backward pass per tape; a second backward() without rebuilding the
// graph throws StateError. A tape constructed with grads disabled computes
// values only and records nothing, which is the evaluation path.
//
// A tape and the tensors produced on it belong to one thread. Independent
// tapes never share mutable state and may run concurrently.
class Tape {
 public:
  Tape() = default;
  explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  size_t op_count() const { return ops_.size(); }

  // Pointwise binary ops. Shapes must match exactly, or agree on every axis
  // with one operand having extent 1 on the last axis (which broadcasts).
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor div(const Tensor& a, const Tensor& b);

  // scale * x + shift, elementwise with constants.
  Tensor affine(const Tensor& x, double scale, double shift);

  Tensor tanh(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  Tensor log(const Tensor& x);   // DomainError on any entry <= 0
  Tensor max0(const Tensor& x);  // subgradient 0 at the kink
  Tensor clip(const Tensor& x, double lo, double hi);

  Tensor transpose(const Tensor& x);  // rank-2 only
  Tensor reshape(const Tensor& x, Shape shape);

  Tensor matmul(const Tensor& a, const Tensor& b);

  // matrix[r][c] + vec[c] for every row r.
  Tensor add_rowvec(const Tensor& matrix, const Tensor& vec);

  // Per-slice affine map with disjoint parameters: w is (L, dout, din),
  // bias (L, dout), x (L, din) -> (L, dout). Slice k only reads w[k], b[k].
  Tensor lfc_linear(const Tensor& w, const Tensor& bias, const Tensor& x);

  Tensor softmax(const Tensor& x, size_t axis);

  Tensor sum(const Tensor& x);
  Tensor sum(const Tensor& x, size_t axis);
  Tensor mean(const Tensor& x);
  Tensor mean(const Tensor& x, size_t axis);

  struct DotNorm {
    Tensor dot;
    Tensor norm_a;
    Tensor norm_b;
  };
  // Euclidean dot product and both norms of two equal-length vectors.
  // The norm gradient at the zero vector is 0.
  DotNorm dot_and_norm(const Tensor& a, const Tensor& b);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. loss must be
  // scalar. Gradients accumulate additively into every requires_grad node.
  void backward(const Tensor& loss);

 private:
  Tensor make_result(Shape shape, std::vector<double> data, bool any_input_grad);
  bool recording(bool any_input_grad) const { return grad_enabled_ && any_input_grad; }
  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

  Tensor binary_op(const Tensor& a, const Tensor& b, int kind);
  Tensor reduce(const Tensor& x, bool mean_kind);
  Tensor reduce_axis(const Tensor& x, size_t axis, bool mean_kind);

  bool grad_enabled_ = true;
  bool consumed_ = false;
  std::vector<std::function<void()>> ops_;
};

}  // namespace dman
