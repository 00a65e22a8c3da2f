// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <array>
#include <limits>
#include <random>

#include "decoquant/mpo.hpp"
#include "test_util.hpp"

namespace decoquant {
namespace {

using testing::random_tensor;

ShapePlan plan_of(std::vector<std::size_t> i, std::vector<std::size_t> j) { return {std::move(i), std::move(j)}; }

// Direct bond-law oracle: d_k = min(prod_{l<=k} i_l j_l, prod_{l>k} i_l j_l).
std::vector<std::size_t> oracle_bonds(const ShapePlan& p) {
  std::vector<std::size_t> d{1};
  for (std::size_t k = 1; k < p.n(); ++k) {
    std::size_t left = 1, right = 1;
    for (std::size_t l = 0; l < k; ++l) left *= p.i_factors[l] * p.j_factors[l];
    for (std::size_t l = k; l < p.n(); ++l) right *= p.i_factors[l] * p.j_factors[l];
    d.push_back(std::min(left, right));
  }
  d.push_back(1);
  return d;
}

TEST(PlanShapes, DefaultSquare) {
  EXPECT_EQ(plan_shapes(4096, 4096, 2), plan_of({8, 512}, {8, 512}));
}

TEST(PlanShapes, PrimeDimensionKeepsItselfWhenSmall) {
  EXPECT_EQ(plan_shapes(7, 16, 2), plan_of({7, 1}, {8, 2}));
}

TEST(PlanShapes, LargePrimeFallsBackToOne) {
  EXPECT_EQ(plan_shapes(13, 12, 2), plan_of({1, 13}, {6, 2}));
}

TEST(PlanShapes, UnitMatrix) { EXPECT_EQ(plan_shapes(1, 1, 2), plan_of({1, 1}, {1, 1})); }

TEST(PlanShapes, LongerChainsPeelLeftmostFirst) {
  EXPECT_EQ(plan_shapes(512, 512, 3), plan_of({8, 8, 8}, {8, 8, 8}));
  EXPECT_EQ(plan_shapes(512, 512, 4), plan_of({8, 8, 8, 1}, {8, 8, 8, 1}));
  EXPECT_EQ(plan_shapes(4096, 4096, 3), plan_of({8, 8, 64}, {8, 8, 64}));
}

TEST(PlanShapes, ProductsAlwaysMatch) {
  for (std::size_t rows : {1u, 2u, 7u, 12u, 64u, 97u, 360u, 512u, 1000u}) {
    for (std::size_t n : {2u, 3u, 4u}) {
      const ShapePlan p = plan_shapes(rows, 48, n);
      EXPECT_EQ(p.n(), n);
      EXPECT_EQ(p.rows(), rows);
      EXPECT_EQ(p.cols(), 48u);
      for (std::size_t k = 0; k + 1 < n; ++k) EXPECT_LE(p.i_factors[k], kPlanFactorCap);
    }
  }
}

TEST(PlanShapes, RejectsBadArguments) {
  EXPECT_THROW(plan_shapes(4, 4, 1), Error);
  EXPECT_THROW(plan_shapes(0, 4, 2), Error);
}

TEST(Decompose, IdentityIsExact) {
  const DenseTensor eye = DenseTensor::identity(4);
  const MpoChain chain = decompose(eye, plan_of({2, 2}, {2, 2}));
  EXPECT_LT(testing::max_abs_difference(reconstruct(chain), eye), 1e-6);
}

TEST(Decompose, Random64HasFullBond) {
  const DenseTensor m = random_tensor({64, 64}, 2);
  const MpoChain chain = decompose(m, plan_of({8, 8}, {8, 8}));
  ASSERT_EQ(chain.n(), 2u);
  EXPECT_EQ(chain.locals[0].shape(), (Shape{1, 8, 8, 64}));
  EXPECT_EQ(chain.locals[1].shape(), (Shape{64, 8, 8, 1}));
  EXPECT_LT(relative_error(m, reconstruct(chain)), 1e-5);
}

TEST(Decompose, DefaultPlanSharesFor4096) {
  const ShapePlan p = plan_shapes(4096, 4096, 2);
  const auto shapes = local_shapes(p);
  EXPECT_EQ(shapes[0], (Shape{1, 8, 8, 64}));
  EXPECT_EQ(shapes[1], (Shape{64, 512, 512, 1}));
  const double first = static_cast<double>(shape_product(shapes[0]));
  const double last = static_cast<double>(shape_product(shapes[1]));
  const double total = first + last;
  // 4096 / 16781312: about 0.0244 %, above the 0.01 % the planner notes quote.
  EXPECT_NEAR(first / total, 4096.0 / 16781312.0, 1e-15);
  EXPECT_GE(last / total, 0.999);
  EXPECT_LT(total / (4096.0 * 4096.0) - 1.0, 1e-3);
}

// Exactness over random shapes, plan lengths 2..4 and three matrix families.
TEST(Decompose, ReconstructIsIdentityOnRandomShapes) {
  std::mt19937_64 rng(77);
  const std::size_t dims[] = {1, 3, 7, 8, 12, 16, 30, 48, 64, 81, 96};
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t rows = dims[rng() % std::size(dims)];
    const std::size_t cols = dims[rng() % std::size(dims)];
    const std::size_t n = 2 + rng() % 3;
    const ShapePlan plan = plan_shapes(rows, cols, n);
    const DenseTensor random = random_tensor({rows, cols}, rng());

    DenseTensor rank_one({rows, cols});
    const DenseTensor u = random_tensor({rows}, rng());
    const DenseTensor v = random_tensor({cols}, rng());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) rank_one(r, c) = u[r] * v[c];
    }
    DenseTensor eye({rows, cols});
    for (std::size_t k = 0; k < std::min(rows, cols); ++k) eye(k, k) = 1.0f;

    for (const DenseTensor* m : std::array<const DenseTensor*, 3>{&random, &rank_one, &eye}) {
      const MpoChain chain = decompose(*m, plan);
      chain.validate();
      EXPECT_EQ(bond_dims(plan), oracle_bonds(plan));
      for (std::size_t k = 0; k < n; ++k) {
        EXPECT_EQ(chain.locals[k].dim(0), oracle_bonds(plan)[k]);
        EXPECT_EQ(chain.locals[k].dim(3), oracle_bonds(plan)[k + 1]);
      }
      EXPECT_LT(relative_error(*m, reconstruct(chain)), 1e-4) << rows << "x" << cols << " n=" << n;
      EXPECT_GE(chain.parameter_count(), rows * cols);
    }
  }
}

TEST(Decompose, EveryCenterIsExact) {
  const DenseTensor m = random_tensor({64, 48}, 8);
  const ShapePlan plan = plan_shapes(64, 48, 3);
  for (std::size_t center = 0; center < 3; ++center) {
    EXPECT_LT(relative_error(m, reconstruct(decompose(m, plan, center))), 1e-5);
  }
  EXPECT_THROW(decompose(m, plan, 3), Error);
}

// Locals other than the anchor are bond-slice normalized: every slice along
// the bond facing the anchor has max |value| 1, or is entirely zero.
TEST(Decompose, NonAnchorSlicesAreNormalized) {
  const DenseTensor m = testing::outlier_matrix(128, 128, 16, 20.0f, 9);
  const ShapePlan plan = plan_shapes(128, 128, 3);
  const std::size_t anchor = smallest_local(plan);
  const MpoChain chain = decompose(m, plan, anchor);
  for (std::size_t k = 0; k < chain.n(); ++k) {
    if (k == anchor) continue;
    const DenseTensor& t = chain.locals[k];
    const std::size_t inner = t.dim(1) * t.dim(2);
    const bool faces_right = k < anchor;  // left locals face the anchor via their right bond
    const std::size_t slices = faces_right ? t.dim(3) : t.dim(0);
    for (std::size_t s = 0; s < slices; ++s) {
      double peak = 0.0;
      for (std::size_t a = 0; a < t.dim(0); ++a) {
        for (std::size_t x = 0; x < inner; ++x) {
          for (std::size_t b = 0; b < t.dim(3); ++b) {
            if ((faces_right ? b : a) != s) continue;
            peak = std::max(peak, std::abs(static_cast<double>(t[(a * inner + x) * t.dim(3) + b])));
          }
        }
      }
      EXPECT_TRUE(peak == 0.0 || std::abs(peak - 1.0) < 1e-6) << "local " << k << " slice " << s << " " << peak;
    }
  }
}

TEST(Decompose, SmallestLocalIsFirstOnTies) {
  EXPECT_EQ(smallest_local(plan_of({8, 8}, {8, 8})), 0u);
  EXPECT_EQ(smallest_local(plan_shapes(4096, 4096, 2)), 0u);
  EXPECT_EQ(smallest_local(plan_of({7, 1}, {8, 2})), 1u);
}

TEST(Decompose, Errors) {
  try {
    decompose(DenseTensor({4, 4}), plan_of({2, 2}, {2, 4}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
  DenseTensor bad({4, 4});
  bad(0, 0) = std::numeric_limits<float>::quiet_NaN();
  try {
    decompose(bad, plan_of({2, 2}, {2, 2}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteInput);
  }
}

TEST(Reconstruct, ZeroLargeTensorGivesZeroMatrix) {
  MpoChain chain{{DenseTensor({1, 2, 2, 1}, {1, 2, 3, 4}), DenseTensor({1, 2, 2, 1})}};
  EXPECT_EQ(reconstruct(chain), DenseTensor({4, 4}));
}

TEST(Reconstruct, HandBuiltRankOneChain) {
  // T1[0,a,b,0] = u_ab, T2[0,c,e,0] = v_ce; M[(a,c),(b,e)] = u_ab * v_ce.
  MpoChain chain{{DenseTensor({1, 2, 2, 1}, {1, 2, 3, 4}), DenseTensor({1, 2, 2, 1}, {1, -1, 2, 0.5f})}};
  const DenseTensor m = reconstruct(chain);
  ASSERT_EQ(m.shape(), (Shape{4, 4}));
  EXPECT_EQ(m(0, 0), 1.0f);   // a=0 c=0 b=0 e=0: 1*1
  EXPECT_EQ(m(1, 3), 1.0f);   // a=0 c=1 b=1 e=1: 2*0.5
  EXPECT_EQ(m(2, 1), -3.0f);  // a=1 c=0 b=0 e=1: 3*-1
  EXPECT_EQ(m(3, 2), 8.0f);   // a=1 c=1 b=1 e=0: 4*2
}

TEST(Reconstruct, RejectsBondMismatch) {
  MpoChain chain{{DenseTensor({1, 2, 2, 3}), DenseTensor({2, 2, 2, 1})}};
  try {
    reconstruct(chain);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBondMismatch);
  }
}

TEST(SplitLargeSmall, PicksTheBiggerTensor) {
  MpoChain chain{{DenseTensor({1, 8, 8, 64}), DenseTensor({64, 16, 16, 1})}};
  const auto split = split_large_small(chain);
  EXPECT_EQ(split.large_index, 1u);
  EXPECT_EQ(split.large.shape(), (Shape{64, 16, 16, 1}));
  EXPECT_EQ(split.small.shape(), (Shape{1, 8, 8, 64}));
}

TEST(SplitLargeSmall, TiesGoToTheLast) {
  const MpoChain chain = decompose(random_tensor({64, 64}, 1), plan_shapes(64, 64, 2));
  EXPECT_EQ(split_large_small(chain).large_index, 1u);
  const MpoChain unit = decompose(DenseTensor::from_rows({{2.0f}}), plan_shapes(1, 1, 2));
  EXPECT_EQ(split_large_small(unit).large_index, 1u);
  EXPECT_THROW(split_large_small(decompose(random_tensor({8, 8}, 1), plan_shapes(8, 8, 3))), Error);
}

TEST(Planner, BiasHoldsForLargeMatrices) {
  for (std::size_t rows : {768u, 1024u, 4096u}) {
    for (std::size_t cols : {1024u, 2048u, 4096u}) {
      const auto shapes = local_shapes(plan_shapes(rows, cols, 2));
      EXPECT_LT(static_cast<double>(shape_product(shapes[0])) / static_cast<double>(shape_product(shapes[1])), 0.01);
    }
  }
  // Overhead law for every default 2-local plan with i1 = j1 = 8.
  for (std::size_t size : {64u, 128u, 512u}) {
    const auto shapes = local_shapes(plan_shapes(size, size, 2));
    EXPECT_EQ(shape_product(shapes[0]) + shape_product(shapes[1]), size * size + 4096);
  }
}

}  // namespace
}  // namespace decoquant
