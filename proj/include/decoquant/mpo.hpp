// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "decoquant/tensor.hpp"

namespace decoquant {

/// Index splits I = prod(i_factors), J = prod(j_factors), one pair per local.
struct ShapePlan {
  std::vector<std::size_t> i_factors;
  std::vector<std::size_t> j_factors;

  std::size_t n() const { return i_factors.size(); }
  std::size_t rows() const { return shape_product(i_factors); }
  std::size_t cols() const { return shape_product(j_factors); }

  /// Throws InvalidArgument unless both lists have the same length >= 2 and
  /// every factor is >= 1.
  void validate() const;

  bool operator==(const ShapePlan&) const = default;
};

inline constexpr std::size_t kPlanFactorCap = 8;

/// Biased split: small factors (<= 8, largest divisor first) are peeled from
/// the left, the last position keeps the residual. I = 4096, n = 2 gives
/// (8, 512); a prime I <= 8 gives (I, 1).
ShapePlan plan_shapes(std::size_t rows, std::size_t cols, std::size_t n);

/// Full-rank bond dimensions d_0..d_n, d_k = min(prod_{l<=k} i_l j_l, prod_{l>k} i_l j_l).
std::vector<std::size_t> bond_dims(const ShapePlan& plan);

/// Shapes [d_{k-1}, i_k, j_k, d_k] of every local for a full-rank chain.
std::vector<Shape> local_shapes(const ShapePlan& plan);

/// Index of the local with the fewest elements (ties go to the first).
std::size_t smallest_local(const ShapePlan& plan);

/// Chain of 4-D local tensors [d_{k-1}, i_k, j_k, d_k] with d_0 = d_n = 1.
struct MpoChain {
  std::vector<DenseTensor> locals;

  std::size_t n() const { return locals.size(); }
  ShapePlan plan() const;
  std::size_t parameter_count() const;

  /// Throws BondMismatch on non-4-D locals or disagreeing bonds.
  void validate() const;
};

/// Exact (untruncated) TT-SVD of `m`.
///
/// The matrix is reshaped to [i_1..i_n, j_1..j_n], interleaved to
/// [i_1, j_1, ..., i_n, j_n] and split by successive SVDs in mixed-canonical
/// form around `center`: locals left of it come from left singular vectors,
/// locals right of it from right singular vectors, and the center absorbs the
/// singular values. Every non-center local is rescaled so that each slice
/// along the bond pointing at the center has max |value| == 1; the inverse
/// diagonal is folded into the center. Outlier magnitude therefore collects in
/// the center while the other locals stay inside [-1, 1].
MpoChain decompose(const DenseTensor& m, const ShapePlan& plan, std::size_t center);

/// Same, centered on smallest_local(plan).
MpoChain decompose(const DenseTensor& m, const ShapePlan& plan);

/// Contracts the bonds left to right and undoes the interleaving.
DenseTensor reconstruct(const MpoChain& chain);

struct LargeSmallSplit {
  DenseTensor large;
  DenseTensor small;
  std::size_t large_index = 1;
};

/// For n = 2: T_L is the local with more elements, ties go to the last.
LargeSmallSplit split_large_small(const MpoChain& chain);

}  // namespace decoquant
