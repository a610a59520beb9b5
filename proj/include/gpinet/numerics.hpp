#pragma once

// Dense matrix arithmetic and the point-wise neural primitives shared by the
// network blocks. Every function here is pure and returns finite values for
// finite inputs; a non-finite result raises NumericFault.

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

namespace gpinet {

/// Row-major dense matrix. Rows index correspondences, columns index channels.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr std::size_t kShuffleGroups = 2;

std::string shape_string(const Matrix& m);

/// Throws NumericFault naming `what` if any entry of `m` is NaN or Inf.
void require_finite(const Matrix& m, const char* what);

Matrix matmul(const Matrix& a, const Matrix& b);

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& m);

/// Normalizes each column across rows: (x - mean) / sqrt(var + eps), biased
/// variance. Requires at least two rows.
Matrix instance_norm(const Matrix& m, double eps = kNormEps);

/// Per-channel statistics of a column-normalization layer.
struct RunningStats {
  RowVector mean;
  RowVector var;
  bool initialized = false;

  /// Exponential moving average update. The first update copies the batch
  /// statistics so that an eval pass right after one training pass reproduces
  /// the training output.
  void update(const RowVector& batch_mean, const RowVector& batch_var,
              double momentum = kBatchNormMomentum);
};

struct BatchNormAffine {
  RowVector scale;
  RowVector shift;

  static BatchNormAffine identity(std::size_t channels);
};

enum class BatchNormMode { train, eval };

/// Batch normalization over the N rows of a single correspondence set.
///
/// In train mode the current column statistics are used and `stats` is
/// updated; in eval mode `stats` must already be initialized.
Matrix batch_norm(const Matrix& m, const BatchNormAffine& affine, BatchNormMode mode,
                  RunningStats& stats, double eps = kNormEps);

Matrix relu(const Matrix& m);
Matrix sigmoid(const Matrix& m);

/// Column order produced by the group interleave: view the columns as a
/// groups x (cols/groups) grid, transpose, flatten. Output column j reads
/// input column perm[j].
std::vector<std::size_t> channel_shuffle_permutation(std::size_t cols, std::size_t groups);
std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& perm);

Matrix permute_columns(const Matrix& m, const std::vector<std::size_t>& perm);
Matrix channel_shuffle(const Matrix& m, std::size_t groups = kShuffleGroups);

/// Column means (1 x cols) and biased column variances.
RowVector column_mean(const Matrix& m);
RowVector column_variance(const Matrix& m, const RowVector& mean);

}  // namespace gpinet
