#pragma once

// Minimal reverse-mode differentiation over dense matrices.
//
// A Tape records every forward operation together with a closure that maps the
// output gradient to input gradients (a vector-Jacobian product). Calling
// Tape::backward on a 1x1 loss walks the record in reverse and accumulates the
// resulting gradients into the Parameter objects bound to the tape.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmgl/matrix.hpp"

namespace mmgl {

/// A trainable matrix with its gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string name, Matrix value);

  void zero_grad();
  std::size_t size() const { return value.size(); }
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the gradient of the loss w.r.t. the node's output.
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Binds `p` as a leaf. Gradients reach p.grad only when `trainable`.
  Var parameter(Parameter& p, bool trainable = true);

  /// Records an operation. `fn` is dropped when no input requires a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn fn);

  /// Runs the reverse pass from a 1x1 `loss` and adds leaf gradients into
  /// their parameters. A tape supports a single backward pass.
  void backward(const Var& loss);

  const Matrix& value(const Var& v) const { return nodes_[v.id()].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }

  /// Gradient buffer of `v`, zero-allocated on first access. For use inside
  /// backward closures.
  Matrix& grad(const Var& v);
  /// Gradient after backward; an empty matrix when nothing reached `v`.
  const Matrix& gradient(const Var& v) const { return nodes_[v.id()].grad; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Differentiable operations. Every op checks shapes and throws
/// DimensionError on mismatch.
namespace ad {

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var hadamard(const Var& a, const Var& b);
/// Adds the 1 x c row `bias` to every row of `a`.
Var add_row(const Var& a, const Var& bias);
Var relu(const Var& a);

Var hconcat(std::span<const Var> parts);
/// Columns [begin, end) of `a`.
Var col_slice(const Var& a, std::size_t begin, std::size_t end);
Var gather_rows(const Var& a, std::span<const std::size_t> rows);
/// a[idx, idx] for a square `a`.
Var submatrix(const Var& a, std::span<const std::size_t> idx);

/// Per-row inner product: n x d, n x d -> n x 1.
Var rowwise_dot(const Var& a, const Var& b);
/// Scales row i of `a` by s(i, 0): n x 1, n x d -> n x d.
Var scale_rows(const Var& s, const Var& a);

/// Softmax of x / tau over consecutive column groups of width `group`.
Var group_softmax(const Var& a, std::size_t group, double tau);
Var softmax_rows(const Var& a, double tau);

/// Mean cross-entropy of `labels` under row-softmax(logits). Returns 1x1.
Var cross_entropy(const Var& logits, std::span<const int> labels);

Var sum_all(const Var& a);
/// n x m -> n x 1.
Var row_sums(const Var& a);
Var add_scalar(const Var& a, double s);

}  // namespace ad
}  // namespace mmgl
