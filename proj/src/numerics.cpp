#include "gpinet/numerics.hpp"

#include "gpinet/errors.hpp"

#include <cmath>
#include <sstream>

namespace gpinet {

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw NumericFault(std::string("non-finite value in ") + what + " (" + shape_string(m) + ")");
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a) + " by " + shape_string(b));
  }
  Matrix out = a * b;
  require_finite(out, "matmul");
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double top = m.row(i).maxCoeff();
    out.row(i) = (m.row(i).array() - top).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  require_finite(out, "softmax_rows");
  return out;
}

RowVector column_mean(const Matrix& m) { return m.colwise().mean(); }

RowVector column_variance(const Matrix& m, const RowVector& mean) {
  return (m.rowwise() - mean).array().square().colwise().mean().matrix();
}

Matrix instance_norm(const Matrix& m, double eps) {
  if (m.rows() < 2) {
    throw DegenerateInputError("instance_norm: needs at least 2 rows, got " + shape_string(m));
  }
  const RowVector mean = column_mean(m);
  const RowVector inv_std = (column_variance(m, mean).array() + eps).rsqrt().matrix();
  Matrix out = (m.rowwise() - mean).array().rowwise() * inv_std.array();
  require_finite(out, "instance_norm");
  return out;
}

void RunningStats::update(const RowVector& batch_mean, const RowVector& batch_var,
                          double momentum) {
  if (!initialized) {
    mean = batch_mean;
    var = batch_var;
    initialized = true;
    return;
  }
  if (mean.size() != batch_mean.size()) {
    throw DimensionError("RunningStats::update: channel count changed");
  }
  mean = (1.0 - momentum) * mean + momentum * batch_mean;
  var = (1.0 - momentum) * var + momentum * batch_var;
}

BatchNormAffine BatchNormAffine::identity(std::size_t channels) {
  const auto c = static_cast<Eigen::Index>(channels);
  return {RowVector::Ones(c), RowVector::Zero(c)};
}

Matrix batch_norm(const Matrix& m, const BatchNormAffine& affine, BatchNormMode mode,
                  RunningStats& stats, double eps) {
  if (affine.scale.size() != m.cols() || affine.shift.size() != m.cols()) {
    throw DimensionError("batch_norm: affine parameters do not match " + shape_string(m));
  }
  RowVector mean;
  RowVector var;
  if (mode == BatchNormMode::train) {
    if (m.rows() < 2) {
      throw DegenerateInputError("batch_norm: train mode needs at least 2 rows");
    }
    mean = column_mean(m);
    var = column_variance(m, mean);
    stats.update(mean, var);
  } else {
    if (!stats.initialized) {
      throw UninitializedStatsError("batch_norm: eval mode without running statistics");
    }
    if (stats.mean.size() != m.cols()) {
      throw DimensionError("batch_norm: running statistics do not match " + shape_string(m));
    }
    mean = stats.mean;
    var = stats.var;
  }
  const RowVector gain = (var.array() + eps).rsqrt() * affine.scale.array();
  Matrix out = ((m.rowwise() - mean).array().rowwise() * gain.array()).rowwise() +
               affine.shift.array();
  require_finite(out, "batch_norm");
  return out;
}

Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

Matrix sigmoid(const Matrix& m) {
  // Split by sign so exp never overflows.
  return m.unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
}

std::vector<std::size_t> channel_shuffle_permutation(std::size_t cols, std::size_t groups) {
  if (groups == 0 || cols % groups != 0) {
    throw ConfigError("channel_shuffle: " + std::to_string(cols) +
                      " channels are not divisible into " + std::to_string(groups) + " groups");
  }
  const std::size_t per_group = cols / groups;
  std::vector<std::size_t> perm;
  perm.reserve(cols);
  for (std::size_t j = 0; j < per_group; ++j) {
    for (std::size_t g = 0; g < groups; ++g) perm.push_back(g * per_group + j);
  }
  return perm;
}

std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t j = 0; j < perm.size(); ++j) inv.at(perm[j]) = j;
  return inv;
}

Matrix permute_columns(const Matrix& m, const std::vector<std::size_t>& perm) {
  if (perm.size() != static_cast<std::size_t>(m.cols())) {
    throw DimensionError("permute_columns: permutation of length " + std::to_string(perm.size()) +
                         " for " + shape_string(m));
  }
  Matrix out(m.rows(), m.cols());
  for (std::size_t j = 0; j < perm.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(perm[j]));
  }
  return out;
}

Matrix channel_shuffle(const Matrix& m, std::size_t groups) {
  return permute_columns(m, channel_shuffle_permutation(static_cast<std::size_t>(m.cols()), groups));
}

}  // namespace gpinet
