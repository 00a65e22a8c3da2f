// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "decoquant/tensor.hpp"
#include "test_util.hpp"

namespace decoquant {
namespace {

using testing::random_tensor;

TEST(Tensor, ConstructorRejectsWrongDataLength) {
  EXPECT_THROW(DenseTensor({2, 2}, {1.0f, 2.0f, 3.0f}), Error);
  try {
    DenseTensor({2, 2}, {1.0f});
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSizeMismatch);
  }
}

TEST(Tensor, ZeroLengthAxesAreRepresentable) {
  DenseTensor t({0, 4});
  EXPECT_EQ(t.size(), 0u);
  EXPECT_EQ(t.rows(), 0u);
  EXPECT_EQ(t.cols(), 4u);
}

TEST(Matmul, IdentityIsNeutral) {
  const DenseTensor m = random_tensor({2, 5}, 1);
  EXPECT_EQ(matmul(DenseTensor::identity(2), m), m);
}

TEST(Matmul, HandComputedProduct) {
  const auto a = DenseTensor::from_rows({{1, 2}, {3, 4}});
  const auto b = DenseTensor::from_rows({{5}, {6}});
  EXPECT_EQ(matmul(a, b), DenseTensor::from_rows({{17}, {39}}));
}

TEST(Matmul, EmptyContractionGivesZeros) {
  const DenseTensor out = matmul(DenseTensor({3, 0}), DenseTensor({0, 2}));
  EXPECT_EQ(out, DenseTensor({3, 2}));
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  try {
    matmul(DenseTensor({2, 3}), DenseTensor({2, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(Matmul, AssociativeWithinTolerance) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DenseTensor a = random_tensor({64, 64}, seed * 3);
    const DenseTensor b = random_tensor({64, 64}, seed * 3 + 1);
    const DenseTensor c = random_tensor({64, 64}, seed * 3 + 2);
    const DenseTensor left = matmul(matmul(a, b), c);
    const DenseTensor right = matmul(a, matmul(b, c));
    EXPECT_LT(frobenius_distance(left, right) / frobenius_norm(left), 1e-4);
  }
}

TEST(Matmul, MatchesEigenProduct) {
  const DenseTensor a = random_tensor({17, 9}, 4);
  const DenseTensor b = random_tensor({9, 23}, 5);
  const Eigen::MatrixXd expected = a.matrix().cast<double>() * b.matrix().cast<double>();
  const DenseTensor got = matmul(a, b);
  EXPECT_LT((got.matrix().cast<double>() - expected).norm() / expected.norm(), 1e-6);
}

TEST(Matmul, RowBlocksAreBitIdentical) {
  const DenseTensor a = random_tensor({12, 40}, 6);
  const DenseTensor b = random_tensor({40, 7}, 7);
  const DenseTensor full = matmul(a, b);
  const DenseTensor top = matmul(DenseTensor({1, 40}, {a.data().begin(), a.data().begin() + 40}), b);
  for (std::size_t c = 0; c < 7; ++c) EXPECT_EQ(top(0, c), full(0, c));
}

TEST(Reshape, KeepsBufferOrder) {
  DenseTensor t({4, 4});
  std::iota(t.data().begin(), t.data().end(), 0.0f);
  const DenseTensor r = reshape(t, {2, 2, 2, 2});
  EXPECT_EQ(r.shape(), (Shape{2, 2, 2, 2}));
  EXPECT_TRUE(std::equal(r.data().begin(), r.data().end(), t.data().begin()));
}

TEST(Reshape, RowMajorLaw) {
  DenseTensor t({6});
  std::iota(t.data().begin(), t.data().end(), 0.0f);
  const DenseTensor r = reshape(t, {2, 3});
  EXPECT_EQ(r(1, 2), 5.0f);
  EXPECT_EQ(reshape(r, {6}), t);
}

TEST(Reshape, SizeMismatchThrows) {
  try {
    reshape(DenseTensor({2, 3}), {4, 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSizeMismatch);
  }
}

TEST(Permute, IdentityAxesAndTranspose) {
  const auto m = DenseTensor::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(permute(m, {0, 1}), m);
  EXPECT_EQ(transpose(m), DenseTensor::from_rows({{1, 3}, {2, 4}}));
}

TEST(Permute, RejectsNonPermutations) {
  const DenseTensor t({2, 3, 4});
  for (const Shape& axes : {Shape{0, 1}, Shape{0, 1, 1}, Shape{0, 1, 3}}) {
    try {
      permute(t, std::span<const std::size_t>(axes));
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidPermutation);
    }
  }
}

TEST(Permute, ElementLawOnRank3) {
  DenseTensor t({2, 3, 4});
  std::iota(t.data().begin(), t.data().end(), 0.0f);
  const DenseTensor p = permute(t, {2, 0, 1});
  ASSERT_EQ(p.shape(), (Shape{4, 2, 3}));
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t c = 0; c < 4; ++c) {
        const std::size_t src[] = {a, b, c};
        const std::size_t dst[] = {c, a, b};
        EXPECT_EQ(p.at(dst), t.at(src));
      }
    }
  }
}

// Random rank-2..5 tensors and random axis orders: the inverse permutation
// restores the tensor and the value multiset never changes.
TEST(Permute, InverseRestoresAndPreservesValues) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rank = 2 + rng() % 4;
    Shape shape(rank);
    for (auto& d : shape) d = 1 + rng() % 4;
    const DenseTensor t = random_tensor(shape, rng());
    std::vector<std::size_t> axes(rank);
    std::iota(axes.begin(), axes.end(), 0);
    std::shuffle(axes.begin(), axes.end(), rng);
    const DenseTensor p = permute(t, std::span<const std::size_t>(axes));
    const auto inverse = inverse_permutation(axes);
    EXPECT_EQ(permute(p, std::span<const std::size_t>(inverse)), t);

    std::vector<float> a(t.data().begin(), t.data().end());
    std::vector<float> b(p.data().begin(), p.data().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(Tensor, ConcatRowsStacksInOrder) {
  const auto a = DenseTensor::from_rows({{1, 2}});
  const auto b = DenseTensor::from_rows({{3, 4}, {5, 6}});
  const std::vector<DenseTensor> parts{a, DenseTensor({0, 2}), b};
  EXPECT_EQ(concat_rows<float>(parts, 2), DenseTensor::from_rows({{1, 2}, {3, 4}, {5, 6}}));
  EXPECT_EQ(concat_rows<float>({}, 3).shape(), (Shape{0, 3}));
}

TEST(Tensor, NormsAndRelativeError) {
  const auto a = DenseTensor::from_rows({{3, 4}});
  EXPECT_DOUBLE_EQ(frobenius_norm(a), 5.0);
  EXPECT_DOUBLE_EQ(max_abs(a), 4.0);
  EXPECT_DOUBLE_EQ(relative_error(a, DenseTensor::from_rows({{3, 4}})), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(a, DenseTensor({1, 2})), 1.0);
}

}  // namespace
}  // namespace decoquant
