#pragma once

// Minimal tape-free reverse-mode differentiation.
//
// Each operation allocates a Node holding its value and, when any input needs
// a gradient, the list of parent nodes plus a closure that pushes the node's
// gradient into its parents. backward() topologically orders the graph
// reachable from a scalar loss and runs the closures in reverse.
//
// Graphs are owned through shared_ptr and are not thread-safe; distinct
// graphs may be built and differentiated concurrently. While a NoGradGuard is
// alive on the current thread no parents are recorded, so intermediate values
// are released as soon as they go out of scope.

#include "gpinet/numerics.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace gpinet::ad {

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  /// Gradient of the last backward pass; zeros if none reached this node.
  Matrix grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool defined() const { return static_cast<bool>(node_); }

  const std::shared_ptr<Node>& node() const { return node_; }
  /// Leaf mutation, used by optimizers and finite-difference checks.
  Matrix& mutable_value() { return node_->value; }
  void zero_grad() { node_->grad.resize(0, 0); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var parameter(Matrix value);

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Populates gradients of every node reachable from `loss`. The loss must be 1x1.
void backward(const Var& loss);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Element-wise product of equal shapes.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// a / s where s is 1x1.
Var div_scalar(const Var& a, const Var& s);
Var transpose(const Var& a);

/// (N x d) + (1 x d) broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// (N x d) * (1 x d) broadcast over rows.
Var mul_row(const Var& a, const Var& row);
/// Repeats a 1 x d row N times.
Var broadcast_rows(const Var& row, Eigen::Index n);

Var sum(const Var& a);
/// Column means, 1 x d.
Var mean_rows(const Var& a);
Var concat_cols(const std::vector<Var>& parts);
Var permute_columns(const Var& a, const std::vector<std::size_t>& perm);
/// Averages disjoint groups of `group` adjacent columns: N x d -> N x d/group.
Var group_mean_cols(const Var& a, std::size_t group);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var softmax_rows(const Var& a);
Var instance_norm(const Var& a, double eps = kNormEps);

/// x * W + b with W (d_in x d_out) and b (1 x d_out).
Var linear(const Var& x, const Var& weight, const Var& bias);

/// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets, computed
/// in the overflow-free logits form. logits and targets are N x 1.
Var bce_with_logits(const Var& logits, const Matrix& targets);

}  // namespace gpinet::ad
