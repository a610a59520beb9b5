#include "doctest.h"

#include "gpinet/errors.hpp"
#include "gpinet/numerics.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>

using namespace gpinet;
using gpinet::testing::random_matrix;

TEST_CASE("matmul") {
  Rng rng(1);
  const Matrix m = random_matrix(rng, 3, 3);
  CHECK(matmul(Matrix::Identity(3, 3), m).isApprox(m, 0.0));

  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  Matrix b(2, 1);
  b << 1, 1;
  const Matrix ab = matmul(a, b);
  CHECK(ab(0, 0) == 3.0);
  CHECK(ab(1, 0) == 7.0);

  const Matrix x = random_matrix(rng, 5, 4);
  const Matrix y = random_matrix(rng, 4, 3);
  const Matrix xy = matmul(x, y);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += x(i, k) * y(k, j);
      CHECK(std::abs(xy(i, j) - acc) < 1e-12);
    }
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Matrix::Zero(2, 3), Matrix::Zero(2, 3));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("softmax_rows") {
  Matrix m(3, 3);
  m << 0, 0, 0, 1000, 0, -1000, 1, 2, 3;
  const Matrix s = softmax_rows(m.leftCols(3));
  CHECK(std::abs(s(0, 0) - 1.0 / 3.0) < 1e-15);
  CHECK(std::abs(s(1, 0) - 1.0) < 1e-12);
  CHECK(s(1, 1) < 1e-300);

  Matrix two(1, 2);
  two << 0, 0;
  CHECK(softmax_rows(two)(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

  const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(s(2, k) - std::exp(k + 1.0) / denom) < 1e-12);
}

TEST_CASE("softmax_rows property: rows are distributions at extreme magnitudes") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix m = random_matrix(rng, 1 + rng.index(8), 1 + rng.index(8), 1e3);
    const Matrix s = softmax_rows(m);
    CHECK((s.array() >= 0.0).all());
    for (Eigen::Index i = 0; i < s.rows(); ++i) CHECK(std::abs(s.row(i).sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("instance_norm") {
  Matrix ones = Matrix::Ones(4, 1);
  CHECK(instance_norm(ones).cwiseAbs().maxCoeff() < 1e-12);

  Matrix pair(2, 1);
  pair << 0, 2;
  const Matrix p = instance_norm(pair);
  CHECK(std::abs(p(0, 0) + 1.0) < 1e-4);
  CHECK(std::abs(p(1, 0) - 1.0) < 1e-4);

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = random_matrix(rng, 8, 3, 5.0);
    const Matrix n = instance_norm(m);
    const RowVector mean = column_mean(n);
    const RowVector var = column_variance(n, mean);
    CHECK(mean.cwiseAbs().maxCoeff() < 1e-9);
    CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-3);
  }

  CHECK_THROWS_AS(instance_norm(Matrix::Zero(1, 3)), DegenerateInputError);
}

TEST_CASE("batch_norm modes") {
  Rng rng(5);
  const Matrix m = random_matrix(rng, 6, 3);

  RunningStats unit;
  unit.mean = RowVector::Zero(3);
  unit.var = RowVector::Ones(3);
  unit.initialized = true;
  const Matrix eval_identity = batch_norm(m, BatchNormAffine::identity(3), BatchNormMode::eval, unit, 0.0);
  CHECK((eval_identity - m).cwiseAbs().maxCoeff() < 1e-15);

  RunningStats fresh;
  BatchNormAffine affine = BatchNormAffine::identity(1);
  affine.shift(0) = 0.25;
  const Matrix constant_out = batch_norm(Matrix::Constant(5, 1, 3.0), affine, BatchNormMode::train, fresh);
  CHECK((constant_out.array() - 0.25).abs().maxCoeff() < 1e-3);

  RunningStats stats;
  const Matrix train_out = batch_norm(m, BatchNormAffine::identity(3), BatchNormMode::train, stats);
  CHECK(stats.initialized);
  const Matrix eval_out = batch_norm(m, BatchNormAffine::identity(3), BatchNormMode::eval, stats);
  CHECK((train_out - eval_out).cwiseAbs().maxCoeff() < 1e-2);

  RunningStats empty;
  CHECK_THROWS_AS(batch_norm(m, BatchNormAffine::identity(3), BatchNormMode::eval, empty),
                  UninitializedStatsError);
}

TEST_CASE("batch_norm running statistics use momentum 0.1 after the first step") {
  RunningStats st;
  RowVector m0(1), v0(1), m1(1), v1(1);
  m0 << 1.0;
  v0 << 4.0;
  m1 << 3.0;
  v1 << 2.0;
  st.update(m0, v0);
  st.update(m1, v1);
  CHECK(st.mean(0) == doctest::Approx(0.9 * 1.0 + 0.1 * 3.0));
  CHECK(st.var(0) == doctest::Approx(0.9 * 4.0 + 0.1 * 2.0));
}

TEST_CASE("relu") {
  Matrix m(1, 3);
  m << -1, 0, 2;
  const Matrix r = relu(m);
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 0.0);
  CHECK(r(0, 2) == 2.0);

  Rng rng(11);
  const Matrix pos = random_matrix(rng, 4, 4).cwiseAbs();
  CHECK(relu(pos) == pos);
  const Matrix any = random_matrix(rng, 4, 4);
  const Matrix out = relu(any);
  for (Eigen::Index i = 0; i < any.size(); ++i) CHECK(out.data()[i] == std::max(0.0, any.data()[i]));
}

TEST_CASE("channel_shuffle") {
  Matrix m(1, 6);
  m << 0, 1, 2, 3, 4, 5;
  CHECK(channel_shuffle(m, 1) == m);
  const Matrix s = channel_shuffle(m, 2);
  const std::vector<double> expected{0, 3, 1, 4, 2, 5};
  for (int j = 0; j < 6; ++j) CHECK(s(0, j) == expected[static_cast<std::size_t>(j)]);

  const auto perm = channel_shuffle_permutation(6, 2);
  CHECK(permute_columns(s, inverse_permutation(perm)) == m);

  CHECK_THROWS_AS(channel_shuffle(Matrix::Zero(2, 5), 2), ConfigError);
}

TEST_CASE("channel_shuffle property: every row keeps its multiset") {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const auto groups = static_cast<std::size_t>(1 + rng.index(4));
    const auto cols = static_cast<Eigen::Index>(groups * (1 + rng.index(5)));
    const Matrix m = random_matrix(rng, 3, cols);
    const Matrix s = channel_shuffle(m, groups);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> a(m.row(i).data(), m.row(i).data() + cols);
      RowVector srow = s.row(i);
      std::vector<double> b(srow.data(), srow.data() + cols);
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      CHECK(a == b);
    }
  }
}

TEST_CASE("non-finite results raise NumericFault") {
  Matrix big = Matrix::Constant(1, 1, 1e300);
  CHECK_THROWS_AS(matmul(big, big), NumericFault);
}
