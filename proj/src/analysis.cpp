// SPDX-License-Identifier: Apache-2.0
#include "decoquant/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <numeric>
#include <random>
#include <thread>
#include <tuple>

#include "decoquant/decoquant.hpp"
#include "decoquant/linalg.hpp"
#include "decoquant/quantizer.hpp"

namespace decoquant {
namespace {

std::string format_double(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.9g", v);
  return buffer;
}

// Runs job(k) for k in [0, count) on a small worker pool and returns the
// results in index order.
template <typename Job>
std::vector<std::vector<ErrorRecord>> fan_out(std::size_t count, unsigned threads, Job job) {
  std::vector<std::vector<ErrorRecord>> results(count);
  unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) results[k] = job(k);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> failures(workers);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t k = next++; k < count; k = next++) results[k] = job(k);
        } catch (...) {
          failures[w] = std::current_exception();
          next = count;
        }
      });
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return results;
}

std::vector<ErrorRecord> flatten_sorted(std::vector<std::vector<ErrorRecord>> parts) {
  std::vector<ErrorRecord> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  std::stable_sort(out.begin(), out.end(), [](const ErrorRecord& a, const ErrorRecord& b) {
    return std::tuple(a.seed, a.method, a.bits, a.n) < std::tuple(b.seed, b.method, b.bits, b.n);
  });
  return out;
}

ErrorRecord make_record(Method method, int bits, std::size_t n, std::uint64_t seed, const DenseTensor& original,
                        const DenseTensor& approx, double overhead) {
  ErrorRecord r;
  r.method = method;
  r.bits = bits;
  r.n = n;
  r.seed = seed;
  r.frobenius_error = frobenius_distance(original, approx);
  const double norm = frobenius_norm(original);
  r.relative_error = norm > 0.0 ? r.frobenius_error / norm : r.frobenius_error;
  r.param_overhead = overhead;
  return r;
}

double chain_overhead(std::size_t stored, const DenseTensor& m) {
  return static_cast<double>(stored) / static_cast<double>(m.size()) - 1.0;
}

DenseTensor round_trip(const Eigen::MatrixXd& factor, int bits) {
  return dequantize(quantize_rtn(from_eigen<float>(factor), bits));
}

// Two-factor protocol: the factor with more elements is quantized, ties go
// to the right factor.
ErrorRecord two_factor_record(Method method, int bits, std::uint64_t seed, const DenseTensor& m,
                              const Eigen::MatrixXd& left, const Eigen::MatrixXd& right) {
  Eigen::MatrixXd l = left;
  Eigen::MatrixXd r = right;
  if (left.size() > right.size()) {
    l = round_trip(left, bits).matrix().cast<double>();
  } else {
    r = round_trip(right, bits).matrix().cast<double>();
  }
  const DenseTensor approx = from_eigen<float>(l * r);
  const std::size_t stored = static_cast<std::size_t>(left.size() + right.size());
  return make_record(method, bits, 2, seed, m, approx, chain_overhead(stored, m));
}

}  // namespace

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::kEmptyInput, "quantile of an empty sequence");
  const double position = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(position));
  const double frac = position - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

OutlierStats iqr_stats(std::span<const float> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput, "iqr_stats needs at least one value");
  std::vector<double> sorted(values.begin(), values.end());
  if (!std::all_of(sorted.begin(), sorted.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::kNonFiniteInput, "iqr_stats input has non-finite entries");
  }
  std::sort(sorted.begin(), sorted.end());
  OutlierStats s;
  s.q1 = sorted_quantile(sorted, 0.25);
  s.q3 = sorted_quantile(sorted, 0.75);
  s.iqr = s.q3 - s.q1;
  s.lower_fence = s.q1 - 1.5 * s.iqr;
  s.upper_fence = s.q3 + 1.5 * s.iqr;
  s.total_count = sorted.size();
  s.outlier_count = static_cast<std::size_t>(std::count_if(
      sorted.begin(), sorted.end(), [&](double v) { return v < s.lower_fence || v > s.upper_fence; }));
  return s;
}

DenseTensor synth_activations(std::size_t rows, std::size_t cols, std::size_t outlier_cols, float outlier_scale,
                              std::uint64_t seed) {
  if (outlier_cols > cols) throw Error(ErrorCode::kInvalidArgument, "more outlier columns than columns");
  if (!(outlier_scale >= 1.0f)) throw Error(ErrorCode::kInvalidArgument, "outlier_scale must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  DenseTensor m({rows, cols});
  for (float& v : m.data()) v = normal(rng);

  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t k = 0; k < outlier_cols; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, cols - 1);
    std::swap(order[k], order[pick(rng)]);
    for (std::size_t r = 0; r < rows; ++r) m(r, order[k]) *= outlier_scale;
  }
  return m;
}

std::vector<SuiteMatrix> make_suite(const SuiteConfig& config) {
  std::vector<SuiteMatrix> suite;
  for (std::size_t k = 0; k < config.seeds; ++k) {
    const std::uint64_t seed = config.first_seed + k;
    suite.push_back({seed, synth_activations(config.rows, config.cols, config.outlier_cols, config.outlier_scale, seed)});
  }
  return suite;
}

MigrationReport migration_report(const DenseTensor& m, const ShapePlan& plan) {
  if (m.rank() != 2) throw Error(ErrorCode::kShapeMismatch, "migration_report needs a 2-D tensor");
  if (plan.n() != 2) throw Error(ErrorCode::kInvalidArgument, "migration_report uses a length-2 chain");
  const LargeSmallSplit split = split_large_small(decompose(m, plan));
  return {iqr_stats(m), iqr_stats(split.large), iqr_stats(split.small)};
}

MigrationReport migration_report(const DenseTensor& m) {
  if (m.rank() != 2) throw Error(ErrorCode::kShapeMismatch, "migration_report needs a 2-D tensor");
  return migration_report(m, plan_shapes(m.dim(0), m.dim(1), 2));
}

std::string_view method_label(Method method) {
  switch (method) {
    case Method::kMatrixRtn: return "matrix-rtn";
    case Method::kDecoTlOnly: return "deco-tl-only";
    case Method::kDecoBoth: return "deco-both";
    case Method::kSvdQuant: return "svd-quant";
    case Method::kQrQuant: return "qr-quant";
  }
  return "unknown";
}

std::vector<ErrorRecord> strategy_sweep(std::span<const SuiteMatrix> suite, std::span<const int> bits,
                                        SweepOptions options) {
  return flatten_sorted(fan_out(suite.size(), options.threads, [&](std::size_t k) {
    const auto& [seed, m] = suite[k];
    const MpoChain chain = decompose(m, plan_shapes(m.dim(0), m.dim(1), 2));
    const double overhead = chain_overhead(chain.parameter_count(), m);
    std::vector<ErrorRecord> out;
    for (int b : bits) {
      out.push_back(make_record(Method::kMatrixRtn, b, 2, seed, m, dequantize(quantize_rtn(m, b)), 0.0));
      out.push_back(make_record(Method::kDecoBoth, b, 2, seed, m,
                                deco_dequantize(quantize_chain(chain, b, LocalSelection::kAll)), overhead));
      out.push_back(make_record(Method::kDecoTlOnly, b, 2, seed, m,
                                deco_dequantize(quantize_chain(chain, b, LocalSelection::kAllButSmallest)), overhead));
    }
    return out;
  }));
}

std::vector<ErrorRecord> length_sweep(std::span<const SuiteMatrix> suite, std::span<const std::size_t> lengths,
                                      int bits, SweepOptions options) {
  return flatten_sorted(fan_out(suite.size(), options.threads, [&](std::size_t k) {
    const auto& [seed, m] = suite[k];
    std::vector<ErrorRecord> out;
    for (std::size_t n : lengths) {
      const QuantizedMpo q = deco_quantize(m, bits, n);
      out.push_back(make_record(Method::kDecoTlOnly, bits, n, seed, m, deco_dequantize(q),
                                chain_overhead(q.parameter_count(), m)));
    }
    return out;
  }));
}

std::vector<ErrorRecord> decomposition_comparison(std::span<const SuiteMatrix> suite, int bits,
                                                  SweepOptions options) {
  return flatten_sorted(fan_out(suite.size(), options.threads, [&](std::size_t k) {
    const auto& [seed, m] = suite[k];
    std::vector<ErrorRecord> out;
    const QuantizedMpo q = deco_quantize(m, bits, 2);
    out.push_back(make_record(Method::kDecoTlOnly, bits, 2, seed, m, deco_dequantize(q),
                              chain_overhead(q.parameter_count(), m)));

    const Eigen::MatrixXd w = m.matrix().cast<double>();
    const linalg::EigenSvd f = linalg::jacobi_svd(w);
    const Eigen::VectorXd root = f.s.cwiseSqrt();
    out.push_back(two_factor_record(Method::kSvdQuant, bits, seed, m, f.u * root.asDiagonal(),
                                    root.asDiagonal() * f.v.transpose()));

    const linalg::EigenQr qr = linalg::householder_qr(w);
    out.push_back(two_factor_record(Method::kQrQuant, bits, seed, m, qr.q, qr.r));
    return out;
  }));
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput, "median of an empty sequence");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

std::vector<MedianRow> summarize(std::span<const ErrorRecord> records) {
  std::map<std::tuple<Method, int, std::size_t>, std::vector<const ErrorRecord*>> groups;
  for (const auto& r : records) groups[{r.method, r.bits, r.n}].push_back(&r);
  std::vector<MedianRow> rows;
  for (const auto& [key, members] : groups) {
    std::vector<double> frob, rel, over;
    for (const auto* r : members) {
      frob.push_back(r->frobenius_error);
      rel.push_back(r->relative_error);
      over.push_back(r->param_overhead);
    }
    rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), members.size(), median(frob), median(rel),
                    median(over)});
  }
  return rows;
}

double median_error(std::span<const ErrorRecord> records, Method method, int bits, std::size_t n) {
  std::vector<double> values;
  for (const auto& r : records) {
    if (r.method == method && r.bits == bits && r.n == n) values.push_back(r.frobenius_error);
  }
  return median(std::move(values));
}

void write_errors_csv(std::ostream& out, std::span<const ErrorRecord> records) {
  out << "method,bits,n,seed,frobenius_error,relative_error,param_overhead\n";
  for (const auto& r : records) {
    out << method_label(r.method) << ',' << r.bits << ',' << r.n << ',' << r.seed << ','
        << format_double(r.frobenius_error) << ',' << format_double(r.relative_error) << ','
        << format_double(r.param_overhead) << '\n';
  }
}

void write_outliers_csv(std::ostream& out, const MigrationReport& report) {
  out << "tensor_label,q1,q3,iqr,outlier_count,total\n";
  const auto row = [&](std::string_view label, const OutlierStats& s) {
    out << label << ',' << format_double(s.q1) << ',' << format_double(s.q3) << ',' << format_double(s.iqr) << ','
        << s.outlier_count << ',' << s.total_count << '\n';
  };
  row("matrix", report.matrix);
  row("T_L", report.large);
  row("T_S", report.small);
}

void write_summary(std::ostream& out, std::span<const MedianRow> rows) {
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %4s %3s %5s %16s %14s %14s\n", "method", "bits", "n", "count",
                "median_frob", "median_rel", "overhead");
  out << line;
  for (const auto& r : rows) {
    const std::string label(method_label(r.method));
    std::snprintf(line, sizeof line, "%-14s %4d %3zu %5zu %16.6g %14.6g %14.6g\n", label.c_str(), r.bits, r.n,
                  r.count, r.frobenius_error, r.relative_error, r.param_overhead);
    out << line;
  }
}

}  // namespace decoquant
