// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "decoquant/tensor.hpp"

namespace decoquant {

/// Largest code for a symmetric m-bit quantizer: 2^(m-1) - 1.
constexpr int max_code(int bits) { return (1 << (bits - 1)) - 1; }

constexpr bool is_supported_bits(int bits) { return bits == 2 || bits == 4 || bits == 8; }

constexpr std::size_t packed_size(std::size_t count, int bits) {
  return (count * static_cast<std::size_t>(bits) + 7) / 8;
}

/// Bit-packed symmetric integer tensor with a single step size.
///
/// Codes live in [-(2^(m-1)-1), 2^(m-1)-1]; element e occupies bits
/// [e*m, e*m + m) of the payload, least significant bits first.
struct QuantizedTensor {
  Shape shape;
  int bits = 8;
  float scale = 1.0f;
  std::vector<std::uint8_t> payload;

  std::size_t size() const { return shape_product(shape); }

  /// Throws CorruptPayload when the payload disagrees with shape/bits or the
  /// scale is not positive and finite.
  void validate() const;

  /// Code of element `flat` without unpacking the rest.
  std::int8_t code(std::size_t flat) const {
    const std::size_t bit = flat * static_cast<std::size_t>(bits);
    const unsigned mask = (1u << bits) - 1u;
    const unsigned raw = (static_cast<unsigned>(payload[bit >> 3]) >> (bit & 7u)) & mask;
    const int sign_bit = 1 << (bits - 1);
    return static_cast<std::int8_t>(static_cast<int>(raw ^ static_cast<unsigned>(sign_bit)) - sign_bit);
  }

  bool operator==(const QuantizedTensor&) const = default;
};

/// Symmetric round-to-nearest quantization with one step size for the whole
/// tensor: scale = max|t| / (2^(m-1)-1), code = round(w / scale) with ties
/// away from zero. The ratio is evaluated as w * qmax / max|t| in double so
/// that exact half-steps stay exact. An all-zero tensor gets scale 1.
QuantizedTensor quantize_rtn(const DenseTensor& t, int bits);

DenseTensor dequantize(const QuantizedTensor& q);

/// Packs codes two's-complement, little-endian within each byte.
std::vector<std::uint8_t> pack(std::span<const std::int8_t> values, int bits);
std::vector<std::int8_t> unpack(std::span<const std::uint8_t> bytes, std::size_t count, int bits);

}  // namespace decoquant
