// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "decoquant/mpo.hpp"
#include "decoquant/tensor.hpp"

namespace decoquant {

struct OutlierStats {
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double lower_fence = 0.0;
  double upper_fence = 0.0;
  std::size_t outlier_count = 0;
  std::size_t total_count = 0;
};

/// Quantile of ascending data by linear interpolation at position p * (n - 1).
double sorted_quantile(std::span<const double> sorted, double p);

/// Quartiles, 1.5 * IQR fences, and the count of values strictly outside
/// them. Throws EmptyInput.
OutlierStats iqr_stats(std::span<const float> values);
inline OutlierStats iqr_stats(const DenseTensor& t) { return iqr_stats(t.data()); }

/// Unit Gaussian matrix with `outlier_cols` distinct random columns scaled by
/// `outlier_scale`. Deterministic in `seed`.
DenseTensor synth_activations(std::size_t rows, std::size_t cols, std::size_t outlier_cols, float outlier_scale,
                              std::uint64_t seed);

struct SuiteConfig {
  std::size_t seeds = 20;
  std::size_t rows = 512;
  std::size_t cols = 512;
  std::size_t outlier_cols = 8;
  float outlier_scale = 20.0f;
  std::uint64_t first_seed = 0;
};

struct SuiteMatrix {
  std::uint64_t seed = 0;
  DenseTensor matrix;
};

/// Seeds first_seed, first_seed + 1, ...
std::vector<SuiteMatrix> make_suite(const SuiteConfig& config = {});

struct MigrationReport {
  OutlierStats matrix;
  OutlierStats large;  // T_L
  OutlierStats small;  // T_S
};

/// n = 2 decomposition of `m` followed by iqr_stats on the matrix and both locals.
MigrationReport migration_report(const DenseTensor& m, const ShapePlan& plan);
MigrationReport migration_report(const DenseTensor& m);

enum class Method { kMatrixRtn, kDecoTlOnly, kDecoBoth, kSvdQuant, kQrQuant };

std::string_view method_label(Method method);

struct ErrorRecord {
  Method method = Method::kMatrixRtn;
  int bits = 4;
  std::size_t n = 2;
  std::uint64_t seed = 0;
  double frobenius_error = 0.0;  // ||W - W_hat||_F
  double relative_error = 0.0;   // divided by ||W||_F
  double param_overhead = 0.0;   // stored parameters / (I * J) - 1
};

/// Worker count for the sweeps; 0 picks std::thread::hardware_concurrency().
struct SweepOptions {
  unsigned threads = 0;
};

/// Matrix RTN, DecoQuant with every local quantized, and DecoQuant with the
/// small local kept at full precision, for every matrix and bit width.
std::vector<ErrorRecord> strategy_sweep(std::span<const SuiteMatrix> suite, std::span<const int> bits,
                                        SweepOptions options = {});

/// DecoQuant error per decomposition length.
std::vector<ErrorRecord> length_sweep(std::span<const SuiteMatrix> suite, std::span<const std::size_t> lengths,
                                      int bits, SweepOptions options = {});

/// MPO (n = 2), SVD (U sqrt(S) . sqrt(S) V^T) and QR (Q . R) two-factor
/// protocols: the larger factor is quantized (ties go to the second), the
/// other stays full precision.
std::vector<ErrorRecord> decomposition_comparison(std::span<const SuiteMatrix> suite, int bits,
                                                  SweepOptions options = {});

struct MedianRow {
  Method method = Method::kMatrixRtn;
  int bits = 4;
  std::size_t n = 2;
  std::size_t count = 0;
  double frobenius_error = 0.0;
  double relative_error = 0.0;
  double param_overhead = 0.0;
};

/// Medians per (method, bits, n), in that sort order.
std::vector<MedianRow> summarize(std::span<const ErrorRecord> records);

/// Median Frobenius error of one group; throws EmptyInput when it is empty.
double median_error(std::span<const ErrorRecord> records, Method method, int bits, std::size_t n = 2);

double median(std::vector<double> values);

/// method,bits,n,seed,frobenius_error,relative_error,param_overhead
void write_errors_csv(std::ostream& out, std::span<const ErrorRecord> records);

/// tensor_label,q1,q3,iqr,outlier_count,total with rows matrix, T_L, T_S.
void write_outliers_csv(std::ostream& out, const MigrationReport& report);

/// Human-readable median table.
void write_summary(std::ostream& out, std::span<const MedianRow> rows);

}  // namespace decoquant
