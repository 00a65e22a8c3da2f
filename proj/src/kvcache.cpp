// SPDX-License-Identifier: Apache-2.0
#include "decoquant/kvcache.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>

namespace decoquant {
namespace {

std::size_t segment_bytes(const std::variant<QuantizedMpo, DenseTensor>& segment) {
  if (const auto* q = std::get_if<QuantizedMpo>(&segment)) return compression_report(*q).bytes_compressed;
  return std::get<DenseTensor>(segment).size() * 2;
}

DenseTensor tail_tensor(const std::vector<float>& tail, std::size_t rows, std::size_t dim) {
  return DenseTensor({rows, dim}, std::vector<float>(tail.begin(), tail.begin() + static_cast<std::ptrdiff_t>(rows * dim)));
}

DenseTensor slice_columns(const DenseTensor& row, std::size_t begin, std::size_t count) {
  std::vector<float> data(row.data().begin() + static_cast<std::ptrdiff_t>(begin),
                          row.data().begin() + static_cast<std::ptrdiff_t>(begin + count));
  return DenseTensor({1, count}, std::move(data));
}

}  // namespace

void CacheConfig::validate() const {
  if (layers == 0) throw Error(ErrorCode::kInvalidArgument, "layers must be >= 1");
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "dim must be >= 1");
  if (chunk_len == 0) throw Error(ErrorCode::kInvalidArgument, "chunk_len must be >= 1");
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "decomposition length must be >= 2");
  if (!full_precision() && !is_supported_bits(bits)) {
    throw Error(ErrorCode::kInvalidArgument, "bits must be 2, 4, 8 or 16, got " + std::to_string(bits));
  }
}

KvCache::KvCache(CacheConfig config) : config_(config) {
  config_.validate();
  layers_.reserve(config_.layers);
  for (std::size_t l = 0; l < config_.layers; ++l) layers_.push_back(std::make_unique<Layer>());
}

KvCache::Layer& KvCache::layer_at(std::size_t layer) {
  if (layer >= layers_.size()) {
    throw Error(ErrorCode::kLayerOutOfRange, "layer " + std::to_string(layer) + " of " + std::to_string(layers_.size()));
  }
  return *layers_[layer];
}

const KvCache::Layer& KvCache::layer_at(std::size_t layer) const {
  return const_cast<KvCache*>(this)->layer_at(layer);
}

KvCache::StoredSegment KvCache::compress(const DenseTensor& keys, const DenseTensor& values) const {
  StoredSegment s;
  s.rows = keys.dim(0);
  if (config_.full_precision()) {
    s.keys = keys;
    s.values = values;
  } else {
    s.keys = deco_quantize(keys, config_.bits, config_.n);
    s.values = deco_quantize(values, config_.bits, config_.n);
  }
  s.key_bytes = segment_bytes(s.keys);
  s.value_bytes = segment_bytes(s.values);
  return s;
}

void KvCache::prefill(std::size_t layer, const DenseTensor& keys, const DenseTensor& values) {
  Layer& l = layer_at(layer);
  if (l.prefilled || l.written > 0) {
    throw Error(ErrorCode::kAlreadyPrefilled, "layer " + std::to_string(layer) + " already has content");
  }
  const std::size_t d = config_.dim;
  if (keys.rank() != 2 || values.rank() != 2 || keys.dim(1) != d || values.dim(1) != d ||
      keys.dim(0) != values.dim(0)) {
    throw Error(ErrorCode::kDimMismatch, "prefill expects two T x " + std::to_string(d) + " tensors, got " +
                                             shape_string(keys.shape()) + " and " + shape_string(values.shape()));
  }
  if (keys.dim(0) > 0) l.segments.push_back(compress(keys, values));
  l.written = keys.dim(0);
  l.prefilled = true;
}

void KvCache::append_token(std::size_t layer, const DenseTensor& key_row, const DenseTensor& value_row) {
  Layer& l = layer_at(layer);
  const std::size_t d = config_.dim;
  const Shape row{1, d};
  if (key_row.shape() != row || value_row.shape() != row) {
    throw Error(ErrorCode::kDimMismatch, "append_token expects 1 x " + std::to_string(d) + " rows");
  }
  l.key_tail.insert(l.key_tail.end(), key_row.data().begin(), key_row.data().end());
  l.value_tail.insert(l.value_tail.end(), value_row.data().begin(), value_row.data().end());
  ++l.tail_rows;
  ++l.written;
  if (l.tail_rows == config_.chunk_len) {
    l.segments.push_back(compress(tail_tensor(l.key_tail, l.tail_rows, d), tail_tensor(l.value_tail, l.tail_rows, d)));
    l.key_tail.clear();
    l.value_tail.clear();
    l.tail_rows = 0;
  }
}

DenseTensor KvCache::read_side(std::size_t layer, bool keys) const {
  const Layer& l = layer_at(layer);
  std::vector<DenseTensor> parts;
  std::size_t traffic = 0;
  for (const auto& s : l.segments) {
    const auto& segment = keys ? s.keys : s.values;
    if (const auto* q = std::get_if<QuantizedMpo>(&segment)) {
      parts.push_back(deco_dequantize(*q));
    } else {
      parts.push_back(std::get<DenseTensor>(segment));
    }
    traffic += keys ? s.key_bytes : s.value_bytes;
  }
  parts.push_back(tail_tensor(keys ? l.key_tail : l.value_tail, l.tail_rows, config_.dim));
  traffic += l.tail_rows * config_.dim * 2;
  l.bytes_read.fetch_add(traffic, std::memory_order_relaxed);
  return concat_rows<float>(parts, config_.dim);
}

DenseTensor KvCache::read_keys(std::size_t layer) const { return read_side(layer, true); }
DenseTensor KvCache::read_values(std::size_t layer) const { return read_side(layer, false); }

DenseTensor KvCache::attention_scores(std::size_t layer, const DenseTensor& query) const {
  const Layer& l = layer_at(layer);
  const std::size_t d = config_.dim;
  if (query.shape() != Shape{1, d}) {
    throw Error(ErrorCode::kDimMismatch, "query must be 1 x " + std::to_string(d));
  }
  std::vector<float> scores;
  scores.reserve(l.written);
  std::size_t traffic = 0;
  const auto append = [&](const DenseTensor& part) { scores.insert(scores.end(), part.data().begin(), part.data().end()); };
  for (const auto& s : l.segments) {
    if (const auto* q = std::get_if<QuantizedMpo>(&s.keys)) {
      append(fused_matmul_transposed(query, *q));
    } else {
      append(matmul(query, transpose(std::get<DenseTensor>(s.keys))));
    }
    traffic += s.key_bytes;
  }
  append(matmul(query, transpose(tail_tensor(l.key_tail, l.tail_rows, d))));
  traffic += l.tail_rows * d * 2;
  l.bytes_read.fetch_add(traffic, std::memory_order_relaxed);

  const double norm = std::sqrt(static_cast<double>(d));
  for (float& v : scores) v = static_cast<float>(static_cast<double>(v) / norm);
  const std::size_t count = scores.size();
  return DenseTensor({1, count}, std::move(scores));
}

DenseTensor KvCache::attend(std::size_t layer, const DenseTensor& weights) const {
  const Layer& l = layer_at(layer);
  const std::size_t d = config_.dim;
  if (weights.shape() != Shape{1, l.written}) {
    throw Error(ErrorCode::kDimMismatch, "weights must be 1 x " + std::to_string(l.written));
  }
  std::vector<double> acc(d, 0.0);
  std::size_t traffic = 0;
  std::size_t offset = 0;
  const auto add = [&](const DenseTensor& part) {
    for (std::size_t c = 0; c < d; ++c) acc[c] += static_cast<double>(part[c]);
  };
  for (const auto& s : l.segments) {
    const DenseTensor w = slice_columns(weights, offset, s.rows);
    if (const auto* q = std::get_if<QuantizedMpo>(&s.values)) {
      add(fused_matmul(w, *q));
    } else {
      add(matmul(w, std::get<DenseTensor>(s.values)));
    }
    traffic += s.value_bytes;
    offset += s.rows;
  }
  add(matmul(slice_columns(weights, offset, l.tail_rows), tail_tensor(l.value_tail, l.tail_rows, d)));
  traffic += l.tail_rows * d * 2;
  l.bytes_read.fetch_add(traffic, std::memory_order_relaxed);

  std::vector<float> out(d);
  std::transform(acc.begin(), acc.end(), out.begin(), [](double v) { return static_cast<float>(v); });
  return DenseTensor({1, d}, std::move(out));
}

std::size_t KvCache::tokens(std::size_t layer) const { return layer_at(layer).written; }
std::size_t KvCache::segment_count(std::size_t layer) const { return layer_at(layer).segments.size(); }
std::size_t KvCache::tail_length(std::size_t layer) const { return layer_at(layer).tail_rows; }

MemoryLedger KvCache::ledger() const {
  MemoryLedger m;
  const std::size_t d = config_.dim;
  for (const auto& l : layers_) {
    m.bytes_fp16_equivalent += l->written * d * 2 * 2;
    for (const auto& s : l->segments) m.bytes_actual += s.key_bytes + s.value_bytes;
    m.bytes_actual += l->tail_rows * d * 2 * 2;
    m.bytes_moved_read += l->bytes_read.load(std::memory_order_relaxed);
  }
  return m;
}

void KvCache::check_invariants() const {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& l = *layers_[k];
    std::size_t rows = l.tail_rows;
    for (const auto& s : l.segments) rows += s.rows;
    if (rows != l.written) {
      throw Error(ErrorCode::kInvariantViolation, "layer " + std::to_string(k) + " stores " + std::to_string(rows) +
                                                      " rows for " + std::to_string(l.written) + " tokens");
    }
    if (l.tail_rows >= config_.chunk_len) {
      throw Error(ErrorCode::kInvariantViolation, "layer " + std::to_string(k) + " tail reached chunk_len");
    }
    if (l.key_tail.size() != l.tail_rows * config_.dim || l.value_tail.size() != l.tail_rows * config_.dim) {
      throw Error(ErrorCode::kInvariantViolation, "layer " + std::to_string(k) + " tail buffer size");
    }
  }
}

namespace {

using RowMatrixF = RowMatrix<float>;

// Seeded random-weight stack that only exists to feed the cache.
class ToyStack {
 public:
  ToyStack(std::size_t layers, std::size_t dim, std::uint64_t seed) : dim_(dim), rng_(seed) {
    const float scale = 1.0f / std::sqrt(static_cast<float>(dim));
    for (std::size_t l = 0; l < layers; ++l) {
      query_.push_back(random_matrix(dim, dim, scale));
      key_.push_back(random_matrix(dim, dim, scale));
      value_.push_back(random_matrix(dim, dim, scale));
      mix_.push_back(random_matrix(dim, dim, scale));
    }
  }

  struct Projections {
    std::vector<DenseTensor> queries, keys, values;  // one T x D tensor per layer
  };

  Projections next_tokens(std::size_t count) {
    Projections p;
    RowMatrixF hidden = random_matrix(count, dim_, 1.0f);
    for (std::size_t l = 0; l < key_.size(); ++l) {
      p.queries.push_back(from_eigen<float>(hidden * query_[l]));
      p.keys.push_back(from_eigen<float>(hidden * key_[l]));
      p.values.push_back(from_eigen<float>(hidden * value_[l]));
      hidden = (hidden * mix_[l]).array().tanh().matrix();
    }
    return p;
  }

 private:
  RowMatrixF random_matrix(std::size_t rows, std::size_t cols, float scale) {
    std::normal_distribution<float> normal(0.0f, 1.0f);
    RowMatrixF m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = normal(rng_) * scale;
    return m;
  }

  std::size_t dim_;
  std::mt19937_64 rng_;
  std::vector<RowMatrixF> query_, key_, value_, mix_;
};

DenseTensor row_of(const DenseTensor& t, std::size_t row) {
  const std::size_t d = t.dim(1);
  std::vector<float> data(t.data().begin() + static_cast<std::ptrdiff_t>(row * d),
                          t.data().begin() + static_cast<std::ptrdiff_t>((row + 1) * d));
  return DenseTensor({1, d}, std::move(data));
}

TraceRow trace_row(std::size_t step, const KvCache& cache) {
  const MemoryLedger m = cache.ledger();
  TraceRow r;
  r.step = step;
  r.tokens = cache.tokens(0);
  r.segments = cache.segment_count(0);
  r.bytes_actual = m.bytes_actual;
  r.bytes_fp16_equivalent = m.bytes_fp16_equivalent;
  r.bytes_moved_read = m.bytes_moved_read;
  return r;
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

}  // namespace

SimulationResult simulate_generation(const CacheConfig& config, std::size_t prompt_len, std::size_t gen_len,
                                     std::uint64_t seed, bool audit) {
  config.validate();
  KvCache cache(config);
  std::optional<KvCache> shadow;
  if (audit) {
    CacheConfig plain = config;
    plain.bits = kFullPrecisionBits;
    shadow.emplace(plain);
  }
  ToyStack stack(config.layers, config.dim, seed);

  SimulationResult result;
  const auto prompt = stack.next_tokens(prompt_len);
  for (std::size_t l = 0; l < config.layers; ++l) {
    cache.prefill(l, prompt.keys[l], prompt.values[l]);
    if (shadow) shadow->prefill(l, prompt.keys[l], prompt.values[l]);
  }
  cache.check_invariants();
  result.trace.push_back(trace_row(0, cache));

  std::vector<double> deviations;
  for (std::size_t step = 1; step <= gen_len; ++step) {
    const auto token = stack.next_tokens(1);
    double worst = 0.0;
    for (std::size_t l = 0; l < config.layers; ++l) {
      cache.append_token(l, token.keys[l], token.values[l]);
      if (!shadow) continue;
      shadow->append_token(l, token.keys[l], token.values[l]);
      const DenseTensor query = row_of(token.queries[l], 0);
      const DenseTensor scores = cache.attention_scores(l, query);
      const DenseTensor reference = shadow->attention_scores(l, query);
      const double ref = frobenius_norm(reference);
      const double diff = frobenius_distance(reference, scores);
      worst = std::max(worst, ref > 0.0 ? diff / ref : diff);
    }
    cache.check_invariants();
    TraceRow row = trace_row(step, cache);
    if (shadow) {
      row.score_deviation = worst;
      deviations.push_back(worst);
    }
    result.trace.push_back(row);
  }
  result.ledger = cache.ledger();
  if (!deviations.empty()) result.median_score_deviation = median(std::move(deviations));
  return result;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "step,tokens,segments,bytes_actual,bytes_fp16_equivalent,bytes_moved_read,score_deviation\n";
  char buffer[32];
  for (const auto& r : trace) {
    out << r.step << ',' << r.tokens << ',' << r.segments << ',' << r.bytes_actual << ',' << r.bytes_fp16_equivalent
        << ',' << r.bytes_moved_read << ',';
    if (r.score_deviation) {
      std::snprintf(buffer, sizeof buffer, "%.9g", *r.score_deviation);
      out << buffer;
    }
    out << '\n';
  }
}

}  // namespace decoquant
