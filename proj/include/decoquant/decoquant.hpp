// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "decoquant/mpo.hpp"
#include "decoquant/quantizer.hpp"
#include "decoquant/tensor.hpp"

namespace decoquant {

/// A chain local as stored: B-bit integers or full precision.
using StoredLocal = std::variant<QuantizedTensor, DenseTensor>;

/// MPO chain with some locals quantized, in chain order.
struct QuantizedMpo {
  ShapePlan plan;
  int bits = 4;
  std::vector<StoredLocal> locals;

  std::size_t rows() const { return plan.rows(); }
  std::size_t cols() const { return plan.cols(); }
  std::size_t quantized_count() const;
  std::size_t full_precision_count() const;
  std::size_t parameter_count() const;

  /// Throws CorruptPayload for bad quantized locals and BondMismatch when the
  /// local shapes disagree with each other or with the plan.
  void validate() const;

  bool operator==(const QuantizedMpo&) const = default;
};

Shape local_shape(const StoredLocal& local);

enum class LocalSelection {
  kAllButSmallest,  // default protocol: the smallest local stays full precision
  kAll,             // ablation: every local quantized at the same B
};

QuantizedMpo quantize_chain(const MpoChain& chain, int bits, LocalSelection selection = LocalSelection::kAllButSmallest);

/// plan_shapes -> decompose -> quantize every local except the smallest.
QuantizedMpo deco_quantize(const DenseTensor& m, int bits, std::size_t n = 2);

MpoChain dequantize_chain(const QuantizedMpo& q);
DenseTensor deco_dequantize(const QuantizedMpo& q);

inline constexpr std::size_t kFusedTile = 64;

/// Working-set counters of the fused path. Only quantized locals count.
struct FusedMatmulStats {
  std::size_t peak_dequantized_elements = 0;  // largest transient dequantized buffer
  std::size_t tiles_dequantized = 0;
  std::size_t elements_dequantized = 0;
};

/// x (p x I) times the I x J matrix held by q.
///
/// The input is contracted with the chain one local at a time; quantized
/// locals are expanded 64 x 64 elements at a time into a tile buffer right
/// before they are consumed, so neither the full matrix nor a full local is
/// ever materialized in floating point.
DenseTensor fused_matmul(const DenseTensor& x, const QuantizedMpo& q, FusedMatmulStats* stats = nullptr);

/// x (p x J) times the transpose of the matrix held by q; returns p x I.
DenseTensor fused_matmul_transposed(const DenseTensor& x, const QuantizedMpo& q,
                                    FusedMatmulStats* stats = nullptr);

struct CompressionReport {
  double ratio = 1.0;  // stored bits / (I*J*16)
  std::size_t bytes_original = 0;
  std::size_t bytes_compressed = 0;
};

/// Quantized elements count B bits, full-precision elements and each stored
/// scale count 16 bits. Bytes: packed payloads + 2 per full-precision element
/// + 2 per scale, against 2 per original element.
CompressionReport compression_report(const QuantizedMpo& q);

/// Same ratio from shapes alone, for a default plan of an I x J matrix.
double planned_compression_ratio(std::size_t rows, std::size_t cols, int bits, std::size_t n = 2);

}  // namespace decoquant
