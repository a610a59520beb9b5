#include "gpinet/autodiff.hpp"

#include "gpinet/errors.hpp"

#include <cmath>
#include <unordered_set>

namespace gpinet::ad {

namespace {

thread_local bool g_grad_enabled = true;

using Parents = std::vector<std::shared_ptr<Node>>;

Var make(Matrix value, Parents parents, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.value()) + " vs " +
                         shape_string(b.value()));
  }
}

void require_row_of(const Var& a, const Var& row, const char* op) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError(std::string(op) + ": expected 1x" + std::to_string(a.cols()) +
                         " row, got " + shape_string(row.value()));
  }
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Var& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward: loss must be a 1x1 scalar, got " +
                        (loss.defined() ? shape_string(loss.value()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reversing it gives a valid backward order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior gradients are per-pass; leaves accumulate until zero_grad.
  for (Node* n : order) {
    if (n->backward) n->grad.resize(0, 0);
  }
  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  Matrix v = gpinet::matmul(a.value(), b.value());
  return make(std::move(v), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * self.grad);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make(a.value() + b.value(), {a.node(), b.node()}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make(a.value() - b.value(), {a.node(), b.node()}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(self.grad.cwiseProduct(pa.value));
  });
}

Var scale(const Var& a, double factor) {
  return make(a.value() * factor, {a.node()},
              [factor](Node& self) { self.parents[0]->accumulate(self.grad * factor); });
}

Var div_scalar(const Var& a, const Var& s) {
  if (s.rows() != 1 || s.cols() != 1) {
    throw DimensionError("div_scalar: divisor must be 1x1, got " + shape_string(s.value()));
  }
  const double d = s.value()(0, 0);
  Matrix v = a.value() / d;
  require_finite(v, "div_scalar");
  return make(std::move(v), {a.node(), s.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& ps = *self.parents[1];
    const double d = ps.value(0, 0);
    if (pa.requires_grad) pa.accumulate(self.grad / d);
    if (ps.requires_grad) {
      Matrix gs(1, 1);
      gs(0, 0) = -self.grad.cwiseProduct(pa.value).sum() / (d * d);
      ps.accumulate(gs);
    }
  });
}

Var transpose(const Var& a) {
  return make(a.value().transpose(), {a.node()},
              [](Node& self) { self.parents[0]->accumulate(self.grad.transpose()); });
}

Var add_row(const Var& a, const Var& row) {
  require_row_of(a, row, "add_row");
  Matrix v = a.value().rowwise() + row.value().row(0);
  return make(std::move(v), {a.node(), row.node()}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

Var mul_row(const Var& a, const Var& row) {
  require_row_of(a, row, "mul_row");
  Matrix v = a.value().array().rowwise() * row.value().row(0).array();
  return make(std::move(v), {a.node(), row.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pr = *self.parents[1];
    if (pa.requires_grad) {
      pa.accumulate(self.grad.array().rowwise() * pr.value.row(0).array());
    }
    if (pr.requires_grad) pr.accumulate(self.grad.cwiseProduct(pa.value).colwise().sum());
  });
}

Var broadcast_rows(const Var& row, Eigen::Index n) {
  if (row.rows() != 1) {
    throw DimensionError("broadcast_rows: expected a single row, got " + shape_string(row.value()));
  }
  Matrix v = row.value().replicate(n, 1);
  return make(std::move(v), {row.node()},
              [](Node& self) { self.parents[0]->accumulate(self.grad.colwise().sum()); });
}

Var sum(const Var& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return make(std::move(v), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Var mean_rows(const Var& a) {
  const auto n = static_cast<double>(a.rows());
  return make(column_mean(a.value()), {a.node()}, [n](Node& self) {
    Node& p = *self.parents[0];
    p.accumulate((self.grad / n).replicate(p.value.rows(), 1));
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix v(rows, cols);
  Parents parents;
  std::vector<Eigen::Index> offsets;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    v.middleCols(offset, p.cols()) = p.value();
    offsets.push_back(offset);
    offset += p.cols();
    parents.push_back(p.node());
  }
  return make(std::move(v), std::move(parents), [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      if (p.requires_grad) p.accumulate(self.grad.middleCols(offsets[i], p.value.cols()));
    }
  });
}

Var permute_columns(const Var& a, const std::vector<std::size_t>& perm) {
  Matrix v = gpinet::permute_columns(a.value(), perm);
  return make(std::move(v), {a.node()}, [perm](Node& self) {
    Matrix g(self.grad.rows(), self.grad.cols());
    for (std::size_t j = 0; j < perm.size(); ++j) {
      g.col(static_cast<Eigen::Index>(perm[j])) = self.grad.col(static_cast<Eigen::Index>(j));
    }
    self.parents[0]->accumulate(g);
  });
}

Var group_mean_cols(const Var& a, std::size_t group) {
  const auto g = static_cast<Eigen::Index>(group);
  if (g == 0 || a.cols() % g != 0) {
    throw ConfigError("group_mean_cols: " + std::to_string(a.cols()) +
                      " channels not divisible by " + std::to_string(group));
  }
  const Eigen::Index out_cols = a.cols() / g;
  Matrix v(a.rows(), out_cols);
  for (Eigen::Index j = 0; j < out_cols; ++j) {
    v.col(j) = a.value().middleCols(j * g, g).rowwise().mean();
  }
  return make(std::move(v), {a.node()}, [g, out_cols](Node& self) {
    Node& p = *self.parents[0];
    Matrix grad(p.value.rows(), p.value.cols());
    for (Eigen::Index j = 0; j < out_cols; ++j) {
      grad.middleCols(j * g, g) = (self.grad.col(j) / static_cast<double>(g)).replicate(1, g);
    }
    p.accumulate(grad);
  });
}

Var relu(const Var& a) {
  return make(gpinet::relu(a.value()), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    p.accumulate((p.value.array() > 0.0).select(self.grad, 0.0));
  });
}

Var sigmoid(const Var& a) {
  return make(gpinet::sigmoid(a.value()), {a.node()}, [](Node& self) {
    const auto& y = self.value.array();
    self.parents[0]->accumulate((self.grad.array() * y * (1.0 - y)).matrix());
  });
}

Var softmax_rows(const Var& a) {
  return make(gpinet::softmax_rows(a.value()), {a.node()}, [](Node& self) {
    const Matrix& y = self.value;
    const Eigen::VectorXd dots = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = y.cwiseProduct(self.grad.colwise() - dots);
    self.parents[0]->accumulate(g);
  });
}

Var instance_norm(const Var& a, double eps) {
  if (a.rows() < 2) {
    throw DegenerateInputError("instance_norm: needs at least 2 rows, got " +
                               shape_string(a.value()));
  }
  const RowVector mean = column_mean(a.value());
  const RowVector inv_std = (column_variance(a.value(), mean).array() + eps).rsqrt().matrix();
  Matrix v = (a.value().rowwise() - mean).array().rowwise() * inv_std.array();
  require_finite(v, "instance_norm");
  return make(std::move(v), {a.node()}, [inv_std](Node& self) {
    // dx = inv_std / N * (N g - sum(g) - xhat * sum(g * xhat)), per column.
    const Matrix& xhat = self.value;
    const auto n = static_cast<double>(xhat.rows());
    const RowVector g_sum = self.grad.colwise().sum();
    const RowVector gx_sum = self.grad.cwiseProduct(xhat).colwise().sum();
    Matrix centered = (self.grad * n).rowwise() - g_sum;
    centered -= (xhat.array().rowwise() * gx_sum.array()).matrix();
    self.parents[0]->accumulate(centered.array().rowwise() * (inv_std.array() / n));
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_row(matmul(x, weight), bias);
}

Var bce_with_logits(const Var& logits, const Matrix& targets) {
  if (logits.cols() != 1 || targets.rows() != logits.rows() || targets.cols() != 1) {
    throw DimensionError("bce_with_logits: logits " + shape_string(logits.value()) +
                         " vs targets " + shape_string(targets));
  }
  const auto& z = logits.value().array();
  const auto& y = targets.array();
  const auto per_item = z.max(0.0) - z * y + (1.0 + (-z.abs()).exp()).log();
  Matrix v(1, 1);
  v(0, 0) = per_item.mean();
  require_finite(v, "bce_with_logits");
  return make(std::move(v), {logits.node()}, [targets](Node& self) {
    Node& p = *self.parents[0];
    const auto n = static_cast<double>(p.value.rows());
    Matrix g = (gpinet::sigmoid(p.value) - targets) * (self.grad(0, 0) / n);
    p.accumulate(g);
  });
}

}  // namespace gpinet::ad
