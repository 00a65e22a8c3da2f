// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <variant>
#include <vector>

#include "decoquant/decoquant.hpp"
#include "decoquant/tensor.hpp"

namespace decoquant {

inline constexpr int kFullPrecisionBits = 16;

struct CacheConfig {
  std::size_t layers = 1;
  std::size_t dim = 1;
  int bits = 4;  // 2, 4, 8, or kFullPrecisionBits for an uncompressed cache
  std::size_t chunk_len = 1024;
  std::size_t n = 2;

  bool full_precision() const { return bits == kFullPrecisionBits; }
  /// Throws InvalidArgument.
  void validate() const;
};

/// Byte accounting; full-precision values count 2 bytes each.
struct MemoryLedger {
  std::size_t bytes_fp16_equivalent = 0;
  std::size_t bytes_actual = 0;
  std::size_t bytes_moved_read = 0;

  double ratio() const {
    return bytes_fp16_equivalent ? static_cast<double>(bytes_actual) / static_cast<double>(bytes_fp16_equivalent)
                                 : 1.0;
  }
};

/// Per-layer key/value cache: immutable compressed segments plus a
/// full-precision tail that is compressed into a new segment each time it
/// reaches chunk_len rows.
///
/// Writes to one layer must be serialized by the caller. Reads only touch the
/// read-traffic counter, which is atomic, so concurrent reads are fine.
class KvCache {
 public:
  explicit KvCache(CacheConfig config);

  const CacheConfig& config() const { return config_; }

  /// K and V are T x D; each becomes one segment (none when T == 0).
  void prefill(std::size_t layer, const DenseTensor& keys, const DenseTensor& values);

  /// Rows are 1 x D.
  void append_token(std::size_t layer, const DenseTensor& key_row, const DenseTensor& value_row);

  DenseTensor read_keys(std::size_t layer) const;
  DenseTensor read_values(std::size_t layer) const;

  /// q K^T / sqrt(D) for a 1 x D query; compressed segments go through the
  /// fused path and are never expanded as a whole.
  DenseTensor attention_scores(std::size_t layer, const DenseTensor& query) const;

  /// weights (1 x T) times V through the fused path; returns 1 x D.
  DenseTensor attend(std::size_t layer, const DenseTensor& weights) const;

  std::size_t tokens(std::size_t layer) const;
  std::size_t segment_count(std::size_t layer) const;
  std::size_t tail_length(std::size_t layer) const;

  MemoryLedger ledger() const;

  /// Token conservation and trigger exactness; throws InvariantViolation.
  void check_invariants() const;

 private:
  using Segment = std::variant<QuantizedMpo, DenseTensor>;

  struct StoredSegment {
    Segment keys;
    Segment values;
    std::size_t rows = 0;
    std::size_t key_bytes = 0;
    std::size_t value_bytes = 0;
  };

  struct Layer {
    std::vector<StoredSegment> segments;
    std::vector<float> key_tail;
    std::vector<float> value_tail;
    std::size_t tail_rows = 0;
    std::size_t written = 0;  // prefilled + appended tokens
    bool prefilled = false;
    mutable std::atomic<std::size_t> bytes_read{0};
  };

  Layer& layer_at(std::size_t layer);
  const Layer& layer_at(std::size_t layer) const;
  StoredSegment compress(const DenseTensor& keys, const DenseTensor& values) const;
  DenseTensor read_side(std::size_t layer, bool keys) const;

  CacheConfig config_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct TraceRow {
  std::size_t step = 0;  // 0 is the prefill row
  std::size_t tokens = 0;
  std::size_t segments = 0;  // per layer
  std::size_t bytes_actual = 0;
  std::size_t bytes_fp16_equivalent = 0;
  std::size_t bytes_moved_read = 0;
  std::optional<double> score_deviation;
};

struct SimulationResult {
  std::vector<TraceRow> trace;
  MemoryLedger ledger;
  std::optional<double> median_score_deviation;
};

/// Drives a seeded toy attention stack: a hidden stream h_{l+1} = tanh(h_l W_l)
/// supplies per-layer query/key/value projections. The prompt is prefilled,
/// then `gen_len` tokens are appended one at a time. With `audit`, every
/// decode step also scores its query against an uncompressed shadow cache and
/// records max over layers of ||s - s_shadow|| / ||s_shadow||.
SimulationResult simulate_generation(const CacheConfig& config, std::size_t prompt_len, std::size_t gen_len,
                                     std::uint64_t seed, bool audit = false);

/// step,tokens,segments,bytes_actual,bytes_fp16_equivalent,bytes_moved_read,score_deviation
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

}  // namespace decoquant
