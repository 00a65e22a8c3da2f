// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <limits>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "decoquant/linalg.hpp"
#include "test_util.hpp"

namespace decoquant {
namespace {

using testing::random_tensor;

double orthonormality_error(const Eigen::MatrixXd& columns) {
  const Eigen::MatrixXd gram = columns.transpose() * columns;
  return (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

template <typename Scalar>
Eigen::MatrixXd as_eigen(const Tensor<Scalar>& t) {
  return t.matrix().template cast<double>();
}

Eigen::MatrixXd reconstruct(const SvdResult<float>& f) {
  Eigen::VectorXd s(f.singular_values.size());
  for (std::size_t k = 0; k < f.singular_values.size(); ++k) s[k] = f.singular_values[k];
  return as_eigen(f.u) * s.asDiagonal() * as_eigen(f.vt);
}

TEST(Svd, IdentityHasUnitSingularValues) {
  const auto f = svd(DenseTensor::identity(3));
  EXPECT_EQ(f.singular_values, (std::vector<float>{1, 1, 1}));
}

TEST(Svd, DiagonalValuesComeOutSorted) {
  const auto f = svd(DenseTensor::from_rows({{1, 0, 0}, {0, 3, 0}, {0, 0, 2}}));
  EXPECT_FLOAT_EQ(f.singular_values[0], 3.0f);
  EXPECT_FLOAT_EQ(f.singular_values[1], 2.0f);
  EXPECT_FLOAT_EQ(f.singular_values[2], 1.0f);
}

TEST(Svd, TallRandomIsOrthonormalAndExact) {
  const DenseTensor m = random_tensor({32, 16}, 3);
  const auto f = svd(m);
  EXPECT_EQ(f.u.shape(), (Shape{32, 16}));
  EXPECT_EQ(f.vt.shape(), (Shape{16, 16}));
  EXPECT_LT(orthonormality_error(as_eigen(f.u)), 1e-5);
  EXPECT_LT(orthonormality_error(as_eigen(f.vt).transpose()), 1e-5);
  const Eigen::MatrixXd a = as_eigen(m);
  EXPECT_LT((reconstruct(f) - a).norm() / a.norm(), 1e-5);
}

// Eigen's JacobiSVD is the oracle for the singular values; shapes cover
// tall, wide and square inputs.
TEST(Svd, SingularValuesMatchEigenOracle) {
  const std::vector<Shape> shapes{{1, 1}, {1, 7}, {7, 1}, {5, 9}, {40, 12}, {12, 40}, {64, 64}, {100, 37}};
  std::uint64_t seed = 20;
  for (const auto& shape : shapes) {
    const Tensor<double> m = random_tensor<double>(shape, seed++);
    const auto f = svd(m);
    const Eigen::JacobiSVD<Eigen::MatrixXd> oracle(as_eigen(m));
    ASSERT_EQ(f.singular_values.size(), static_cast<std::size_t>(oracle.singularValues().size()));
    for (std::size_t k = 0; k < f.singular_values.size(); ++k) {
      EXPECT_NEAR(f.singular_values[k], oracle.singularValues()[k], 1e-10 * oracle.singularValues()[0]);
    }
    EXPECT_LT(orthonormality_error(as_eigen(f.u)), 1e-10);
    EXPECT_LT(orthonormality_error(as_eigen(f.vt).transpose()), 1e-10);
  }
}

TEST(Svd, RankDeficientKeepsOrthonormalFactors) {
  // Rank 1: outer product; the zero directions must still be orthonormal.
  Tensor<double> m({6, 4});
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 4; ++c) m(r, c) = static_cast<double>(r + 1) * static_cast<double>(c + 2);
  }
  const auto f = svd(m);
  EXPECT_GT(f.singular_values[0], 0.0);
  for (std::size_t k = 1; k < 4; ++k) EXPECT_EQ(f.singular_values[k], 0.0);
  EXPECT_LT(orthonormality_error(as_eigen(f.u)), 1e-10);
  EXPECT_LT(orthonormality_error(as_eigen(f.vt).transpose()), 1e-10);
}

TEST(Svd, ZeroMatrix) {
  const auto f = svd(DenseTensor({5, 3}));
  for (float s : f.singular_values) EXPECT_EQ(s, 0.0f);
  EXPECT_LT(orthonormality_error(as_eigen(f.u)), 1e-6);
}

TEST(Svd, LargeRandomReconstructs) {
  const DenseTensor m = random_tensor({256, 192}, 9);
  const auto f = svd(m);
  const Eigen::MatrixXd a = as_eigen(m);
  EXPECT_LT((reconstruct(f) - a).norm() / a.norm(), 1e-5);
  EXPECT_LT(orthonormality_error(as_eigen(f.u)), 1e-5);
  for (std::size_t k = 1; k < f.singular_values.size(); ++k) {
    EXPECT_GE(f.singular_values[k - 1], f.singular_values[k]);
  }
}

TEST(Svd, RejectsNonFinite) {
  DenseTensor m({2, 2});
  m(1, 1) = std::numeric_limits<float>::quiet_NaN();
  try {
    svd(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteInput);
  }
}

TEST(Qr, IdentityFactorsTrivially) {
  const auto f = qr(DenseTensor::identity(4));
  EXPECT_EQ(f.q, DenseTensor::identity(4));
  EXPECT_EQ(f.rmat, DenseTensor::identity(4));
}

TEST(Qr, SingleColumn) {
  const auto f = qr(DenseTensor::from_rows({{0}, {1}}));
  EXPECT_NEAR(f.q(0, 0), 0.0f, 1e-7);
  EXPECT_NEAR(f.q(1, 0), 1.0f, 1e-7);
  EXPECT_NEAR(f.rmat(0, 0), 1.0f, 1e-7);
}

TEST(Qr, RandomSquareReconstructs) {
  const DenseTensor m = random_tensor({64, 64}, 12);
  const auto f = qr(m);
  const Eigen::MatrixXd a = as_eigen(m);
  EXPECT_LT((as_eigen(f.q) * as_eigen(f.rmat) - a).norm() / a.norm(), 1e-5);
  EXPECT_LT(orthonormality_error(as_eigen(f.q)), 1e-5);
  for (std::size_t r = 0; r < 64; ++r) {
    EXPECT_GE(f.rmat(r, r), 0.0f);
    for (std::size_t c = 0; c < r; ++c) EXPECT_EQ(f.rmat(r, c), 0.0f);
  }
}

// Eigen's HouseholderQR is the oracle; after fixing signs so diag(R) >= 0 the
// factorization is unique for full-rank inputs.
TEST(Qr, MatchesEigenOracleUpToSigns) {
  for (const Shape& shape : {Shape{30, 10}, Shape{10, 30}, Shape{25, 25}}) {
    const Tensor<double> m = random_tensor<double>(shape, shape[0] * 7 + shape[1]);
    const auto f = qr(m);
    const Eigen::MatrixXd a = as_eigen(m);
    const Eigen::HouseholderQR<Eigen::MatrixXd> oracle(a);
    const Eigen::Index r = std::min(a.rows(), a.cols());
    Eigen::MatrixXd rr = oracle.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    for (Eigen::Index k = 0; k < r; ++k) {
      if (rr(k, k) < 0) rr.row(k) *= -1.0;
    }
    EXPECT_LT((as_eigen(f.rmat) - rr).cwiseAbs().maxCoeff(), 1e-10 * rr.cwiseAbs().maxCoeff());
    EXPECT_LT((as_eigen(f.q) * as_eigen(f.rmat) - a).norm() / a.norm(), 1e-12);
  }
}

}  // namespace
}  // namespace decoquant
