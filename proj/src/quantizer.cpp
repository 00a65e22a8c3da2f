// SPDX-License-Identifier: Apache-2.0
#include "decoquant/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace decoquant {
namespace {

void require_bits(int bits) {
  if (!is_supported_bits(bits)) {
    throw Error(ErrorCode::kUnsupportedBits, "bits must be 2, 4 or 8, got " + std::to_string(bits));
  }
}

}  // namespace

void QuantizedTensor::validate() const {
  if (!is_supported_bits(bits)) {
    throw Error(ErrorCode::kCorruptPayload, "bit width " + std::to_string(bits));
  }
  if (!(scale > 0.0f) || !std::isfinite(scale)) {
    throw Error(ErrorCode::kCorruptPayload, "scale must be positive and finite");
  }
  if (payload.size() != packed_size(size(), bits)) {
    throw Error(ErrorCode::kCorruptPayload, "payload holds " + std::to_string(payload.size()) +
                                                " bytes, shape " + shape_string(shape) + " at " +
                                                std::to_string(bits) + " bits needs " +
                                                std::to_string(packed_size(size(), bits)));
  }
  const int reserved = -max_code(bits) - 1;
  for (std::size_t e = 0; e < size(); ++e) {
    if (code(e) == reserved) {
      throw Error(ErrorCode::kCorruptPayload,
                  "reserved code " + std::to_string(reserved) + " at element " + std::to_string(e));
    }
  }
}

std::vector<std::uint8_t> pack(std::span<const std::int8_t> values, int bits) {
  require_bits(bits);
  const int limit = max_code(bits);
  const unsigned mask = (1u << bits) - 1u;
  std::vector<std::uint8_t> out(packed_size(values.size(), bits), 0);
  for (std::size_t e = 0; e < values.size(); ++e) {
    const int v = values[e];
    if (v < -limit || v > limit) {
      throw Error(ErrorCode::kRangeOverflow,
                  "value " + std::to_string(v) + " outside the symmetric " + std::to_string(bits) + "-bit range");
    }
    const std::size_t bit = e * static_cast<std::size_t>(bits);
    out[bit >> 3] |= static_cast<std::uint8_t>((static_cast<unsigned>(v) & mask) << (bit & 7u));
  }
  return out;
}

std::vector<std::int8_t> unpack(std::span<const std::uint8_t> bytes, std::size_t count, int bits) {
  require_bits(bits);
  if (bytes.size() < packed_size(count, bits)) {
    throw Error(ErrorCode::kCorruptPayload, "too few bytes for " + std::to_string(count) + " values");
  }
  QuantizedTensor view{{count}, bits, 1.0f, {}};
  view.payload.assign(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(packed_size(count, bits)));
  std::vector<std::int8_t> out(count);
  for (std::size_t e = 0; e < count; ++e) out[e] = view.code(e);
  return out;
}

QuantizedTensor quantize_rtn(const DenseTensor& t, int bits) {
  require_bits(bits);
  if (!all_finite(t)) throw Error(ErrorCode::kNonFiniteInput, "quantize_rtn input has non-finite entries");

  const int qmax = max_code(bits);
  const double peak = max_abs(t);
  QuantizedTensor q;
  q.shape = t.shape();
  q.bits = bits;
  q.scale = peak > 0.0 ? static_cast<float>(peak / qmax) : 1.0f;
  if (!(q.scale > 0.0f)) q.scale = std::numeric_limits<float>::denorm_min();

  std::vector<std::int8_t> codes(t.size(), 0);
  if (peak > 0.0) {
    for (std::size_t e = 0; e < t.size(); ++e) {
      const double ratio = static_cast<double>(t[e]) * qmax / peak;
      const double r = std::round(ratio);  // halves away from zero
      codes[e] = static_cast<std::int8_t>(std::clamp(r, -static_cast<double>(qmax), static_cast<double>(qmax)));
    }
  }
  q.payload = pack(codes, bits);
  return q;
}

DenseTensor dequantize(const QuantizedTensor& q) {
  q.validate();
  const int limit = max_code(q.bits);
  DenseTensor out(q.shape);
  for (std::size_t e = 0; e < out.size(); ++e) {
    const int c = q.code(e);
    if (c < -limit) throw Error(ErrorCode::kCorruptPayload, "code outside the symmetric range");
    out[e] = static_cast<float>(c) * q.scale;
  }
  return out;
}

}  // namespace decoquant
