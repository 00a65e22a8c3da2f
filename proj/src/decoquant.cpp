// SPDX-License-Identifier: Apache-2.0
#include "decoquant/decoquant.hpp"

#include <algorithm>
#include <string>

namespace decoquant {
namespace {

template <typename... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};

void require_bits(int bits) {
  if (!is_supported_bits(bits)) {
    throw Error(ErrorCode::kUnsupportedBits, "bits must be 2, 4 or 8, got " + std::to_string(bits));
  }
}

std::size_t smallest_index(const std::vector<Shape>& shapes) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < shapes.size(); ++k) {
    if (shape_product(shapes[k]) < shape_product(shapes[best])) best = k;
  }
  return best;
}

// A local [d_l, i_k, j_k, d_r] seen as the matrix [(d_l, m), (o, d_r)], where
// (m, o) = (i_k, j_k) for x * W and (j_k, i_k) for x * W^T.
class LocalMatrix {
 public:
  LocalMatrix(const StoredLocal& local, bool transposed) : transposed_(transposed) {
    if (const auto* q = std::get_if<QuantizedTensor>(&local)) {
      quant_ = q;
      limit_ = max_code(q->bits);
    } else {
      dense_ = &std::get<DenseTensor>(local);
    }
    const Shape s = local_shape(local);
    left_ = s[0];
    i_ = s[1];
    j_ = s[2];
    right_ = s[3];
  }

  bool quantized() const { return quant_ != nullptr; }
  std::size_t left() const { return left_; }
  std::size_t contracted() const { return transposed_ ? j_ : i_; }
  std::size_t produced() const { return transposed_ ? i_ : j_; }
  std::size_t right() const { return right_; }
  std::size_t rows() const { return left_ * contracted(); }
  std::size_t cols() const { return produced() * right_; }

  float value(std::size_t row, std::size_t col) const {
    const std::size_t d = row / contracted();
    const std::size_t m = row % contracted();
    const std::size_t o = col / right_;
    const std::size_t e = col % right_;
    const std::size_t a = transposed_ ? o : m;
    const std::size_t b = transposed_ ? m : o;
    const std::size_t flat = ((d * i_ + a) * j_ + b) * right_ + e;
    if (dense_) return (*dense_)[flat];
    const int c = quant_->code(flat);
    if (c < -limit_) throw Error(ErrorCode::kCorruptPayload, "code outside the symmetric range");
    return static_cast<float>(c) * quant_->scale;
  }

 private:
  const QuantizedTensor* quant_ = nullptr;
  const DenseTensor* dense_ = nullptr;
  int limit_ = 0;
  bool transposed_;
  std::size_t left_ = 1, i_ = 1, j_ = 1, right_ = 1;
};

// One contraction step. `state` has layout [p, m_k, rest] with rest ending in
// the bond d_{k-1}; the result has layout [p, rest / d_{k-1}, o_k, d_k].
std::vector<double> contract_step(const std::vector<double>& state, std::size_t p, const LocalMatrix& local,
                                  FusedMatmulStats* stats) {
  const std::size_t m = local.contracted();
  const std::size_t rest = p && m ? state.size() / (p * m) : 0;
  // Move m_k next to d_{k-1}: [p, m, rest] -> [p, rest, m].
  std::vector<double> moved(state.size());
  for (std::size_t row = 0; row < p; ++row) {
    const double* src = state.data() + row * m * rest;
    double* dst = moved.data() + row * m * rest;
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t r = 0; r < rest; ++r) dst[r * m + a] = src[a * rest + r];
    }
  }

  const std::size_t inner = local.rows();
  const std::size_t cols = local.cols();
  const std::size_t rows = inner ? moved.size() / inner : 0;
  std::vector<double> out(rows * cols, 0.0);
  std::vector<float> tile(kFusedTile * kFusedTile);

  for (std::size_t r0 = 0; r0 < inner; r0 += kFusedTile) {
    const std::size_t r1 = std::min(inner, r0 + kFusedTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kFusedTile) {
      const std::size_t c1 = std::min(cols, c0 + kFusedTile);
      const std::size_t width = c1 - c0;
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) tile[(r - r0) * width + (c - c0)] = local.value(r, c);
      }
      if (stats && local.quantized()) {
        const std::size_t elements = (r1 - r0) * width;
        stats->peak_dequantized_elements = std::max(stats->peak_dequantized_elements, elements);
        stats->tiles_dequantized += 1;
        stats->elements_dequantized += elements;
      }
      for (std::size_t row = 0; row < rows; ++row) {
        const double* lhs = moved.data() + row * inner;
        double* acc = out.data() + row * cols + c0;
        for (std::size_t r = r0; r < r1; ++r) {
          const double s = lhs[r];
          if (s == 0.0) continue;
          const float* t = tile.data() + (r - r0) * width;
          for (std::size_t c = 0; c < width; ++c) acc[c] += s * static_cast<double>(t[c]);
        }
      }
    }
  }
  return out;
}

DenseTensor fused_impl(const DenseTensor& x, const QuantizedMpo& q, bool transposed, FusedMatmulStats* stats) {
  q.validate();
  const std::size_t expected = transposed ? q.cols() : q.rows();
  const std::size_t produced = transposed ? q.rows() : q.cols();
  if (x.rank() != 2 || x.dim(1) != expected) {
    throw Error(ErrorCode::kShapeMismatch, "fused_matmul: x is " + shape_string(x.shape()) + ", matrix is " +
                                               std::to_string(q.rows()) + "x" + std::to_string(q.cols()) +
                                               (transposed ? " (transposed)" : ""));
  }
  const std::size_t p = x.dim(0);
  std::vector<double> state(x.data().begin(), x.data().end());
  for (const auto& local : q.locals) state = contract_step(state, p, LocalMatrix(local, transposed), stats);

  std::vector<float> out(state.size());
  std::transform(state.begin(), state.end(), out.begin(), [](double v) { return static_cast<float>(v); });
  return DenseTensor({p, produced}, std::move(out));
}

}  // namespace

Shape local_shape(const StoredLocal& local) {
  return std::visit(Overloaded{[](const QuantizedTensor& t) { return t.shape; },
                               [](const DenseTensor& t) { return t.shape(); }},
                    local);
}

std::size_t QuantizedMpo::quantized_count() const {
  return static_cast<std::size_t>(std::count_if(locals.begin(), locals.end(), [](const StoredLocal& l) {
    return std::holds_alternative<QuantizedTensor>(l);
  }));
}

std::size_t QuantizedMpo::full_precision_count() const { return locals.size() - quantized_count(); }

std::size_t QuantizedMpo::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : locals) total += shape_product(local_shape(l));
  return total;
}

void QuantizedMpo::validate() const {
  if (!is_supported_bits(bits)) throw Error(ErrorCode::kCorruptPayload, "bit width " + std::to_string(bits));
  try {
    plan.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kBondMismatch, e.what());
  }
  if (locals.size() != plan.n()) {
    throw Error(ErrorCode::kBondMismatch, "plan has " + std::to_string(plan.n()) + " locals, chain has " +
                                              std::to_string(locals.size()));
  }
  std::size_t previous = 1;
  for (std::size_t k = 0; k < locals.size(); ++k) {
    if (const auto* qt = std::get_if<QuantizedTensor>(&locals[k])) {
      qt->validate();
      if (qt->bits != bits) throw Error(ErrorCode::kCorruptPayload, "local bit width differs from the chain");
    }
    const Shape s = local_shape(locals[k]);
    if (s.size() != 4 || s[0] != previous || s[1] != plan.i_factors[k] || s[2] != plan.j_factors[k]) {
      throw Error(ErrorCode::kBondMismatch, "local " + std::to_string(k) + " has shape " + shape_string(s));
    }
    previous = s[3];
  }
  if (previous != 1) throw Error(ErrorCode::kBondMismatch, "last bond must be 1");
}

QuantizedMpo quantize_chain(const MpoChain& chain, int bits, LocalSelection selection) {
  require_bits(bits);
  chain.validate();
  std::vector<Shape> shapes;
  for (const auto& t : chain.locals) shapes.push_back(t.shape());
  const std::size_t keep = smallest_index(shapes);

  QuantizedMpo q;
  q.plan = chain.plan();
  q.bits = bits;
  for (std::size_t k = 0; k < chain.n(); ++k) {
    if (selection == LocalSelection::kAllButSmallest && k == keep) {
      q.locals.emplace_back(chain.locals[k]);
    } else {
      q.locals.emplace_back(quantize_rtn(chain.locals[k], bits));
    }
  }
  return q;
}

QuantizedMpo deco_quantize(const DenseTensor& m, int bits, std::size_t n) {
  require_bits(bits);
  if (m.rank() != 2) throw Error(ErrorCode::kShapeMismatch, "deco_quantize needs a 2-D tensor");
  const ShapePlan plan = plan_shapes(m.dim(0), m.dim(1), n);
  return quantize_chain(decompose(m, plan), bits);
}

MpoChain dequantize_chain(const QuantizedMpo& q) {
  q.validate();
  MpoChain chain;
  for (const auto& l : q.locals) {
    chain.locals.push_back(std::visit(Overloaded{[](const QuantizedTensor& t) { return dequantize(t); },
                                                 [](const DenseTensor& t) { return t; }},
                                      l));
  }
  return chain;
}

DenseTensor deco_dequantize(const QuantizedMpo& q) { return reconstruct(dequantize_chain(q)); }

DenseTensor fused_matmul(const DenseTensor& x, const QuantizedMpo& q, FusedMatmulStats* stats) {
  return fused_impl(x, q, false, stats);
}

DenseTensor fused_matmul_transposed(const DenseTensor& x, const QuantizedMpo& q, FusedMatmulStats* stats) {
  return fused_impl(x, q, true, stats);
}

CompressionReport compression_report(const QuantizedMpo& q) {
  std::size_t bits_total = 0;
  std::size_t bytes = 0;
  for (const auto& l : q.locals) {
    if (const auto* t = std::get_if<QuantizedTensor>(&l)) {
      bits_total += t->size() * static_cast<std::size_t>(t->bits) + 16;
      bytes += t->payload.size() + 2;
    } else {
      const std::size_t count = std::get<DenseTensor>(l).size();
      bits_total += count * 16;
      bytes += count * 2;
    }
  }
  const std::size_t elements = q.rows() * q.cols();
  CompressionReport r;
  r.ratio = static_cast<double>(bits_total) / (static_cast<double>(elements) * 16.0);
  r.bytes_original = elements * 2;
  r.bytes_compressed = bytes;
  return r;
}

double planned_compression_ratio(std::size_t rows, std::size_t cols, int bits, std::size_t n) {
  require_bits(bits);
  const auto shapes = local_shapes(plan_shapes(rows, cols, n));
  const std::size_t keep = smallest_index(shapes);
  std::size_t bits_total = 0;
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const std::size_t count = shape_product(shapes[k]);
    bits_total += k == keep ? count * 16 : count * static_cast<std::size_t>(bits) + 16;
  }
  return static_cast<double>(bits_total) / (static_cast<double>(rows * cols) * 16.0);
}

}  // namespace decoquant
