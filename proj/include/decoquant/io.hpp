// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "decoquant/decoquant.hpp"
#include "decoquant/quantizer.hpp"
#include "decoquant/tensor.hpp"

namespace decoquant {

// DQT1 tensor file, all integers little-endian:
//   "DQT1" | dtype u8 (0 = f32, 1 = packed) | ndim u8 | dims u64 x ndim
//   | packed only: bits u8, scale f32 | payload
// f32 payloads are row-major IEEE-754; packed payloads use the pack() layout.
//
// DQZ1 quantized-chain file:
//   "DQZ1" | version u8 (1) | n u8 | i factors u64 x n | j factors u64 x n
//   | bits u8 | flags u8 x n (1 = quantized) | n tensor bodies
// A tensor body is a DQT1 file without its magic.

inline constexpr std::uint8_t kQuantizedMpoVersion = 1;

std::vector<std::uint8_t> encode_tensor(const StoredLocal& tensor);

/// Throws MalformedFile on any structural problem, including trailing bytes.
StoredLocal decode_tensor(std::span<const std::uint8_t> bytes);

/// Float-only convenience wrapper; a packed file is a MalformedFile here.
DenseTensor decode_dense_tensor(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_quantized_mpo(const QuantizedMpo& q);
QuantizedMpo decode_quantized_mpo(std::span<const std::uint8_t> bytes);

/// Row-major little-endian f32 dump with an externally supplied shape.
DenseTensor import_raw_f32(std::span<const std::uint8_t> bytes, const Shape& shape);
std::vector<std::uint8_t> export_raw_f32(const DenseTensor& t);

/// Whole-file helpers; I/O failures throw MalformedFile.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace decoquant
