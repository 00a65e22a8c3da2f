// SPDX-License-Identifier: Apache-2.0
#include "decoquant/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <string_view>

namespace decoquant {
namespace {

constexpr std::string_view kTensorMagic = "DQT1";
constexpr std::string_view kMpoMagic = "DQZ1";
constexpr std::uint8_t kDtypeFloat = 0;
constexpr std::uint8_t kDtypePacked = 1;

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::kMalformedFile, what); }

class Writer {
 public:
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void bytes(std::span<const std::uint8_t> s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> bytes(std::size_t count) {
    if (count > in_.size() - pos_) malformed("unexpected end of file at byte " + std::to_string(pos_));
    const auto s = in_.subspan(pos_, count);
    pos_ += count;
    return s;
  }
  std::uint8_t u8() { return bytes(1)[0]; }
  std::uint32_t u32() {
    const auto s = bytes(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(s[k]) << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    const auto s = bytes(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(s[k]) << (8 * k);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void magic(std::string_view expected) {
    const auto s = bytes(expected.size());
    if (!std::equal(s.begin(), s.end(), expected.begin())) malformed("bad magic, expected " + std::string(expected));
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  void finish() const {
    if (remaining()) malformed(std::to_string(remaining()) + " trailing bytes");
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_shape(Writer& w, const Shape& shape) {
  if (shape.size() > 255) malformed("tensor rank above 255");
  w.u8(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t d : shape) w.u64(d);
}

Shape read_shape(Reader& r) {
  const std::size_t rank = r.u8();
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    const std::uint64_t v = r.u64();
    // Keep count * 32 (the largest bit width per element) representable.
    if (v != 0 && count > (std::numeric_limits<std::size_t>::max() / 32) / v) malformed("declared shape overflows");
    d = static_cast<std::size_t>(v);
    count *= d;
  }
  return shape;
}

void write_body(Writer& w, const StoredLocal& tensor) {
  if (const auto* q = std::get_if<QuantizedTensor>(&tensor)) {
    q->validate();
    w.u8(kDtypePacked);
    write_shape(w, q->shape);
    w.u8(static_cast<std::uint8_t>(q->bits));
    w.f32(q->scale);
    w.bytes(q->payload);
  } else {
    const auto& t = std::get<DenseTensor>(tensor);
    w.u8(kDtypeFloat);
    write_shape(w, t.shape());
    for (float v : t.data()) w.f32(v);
  }
}

StoredLocal read_body(Reader& r) {
  const std::uint8_t dtype = r.u8();
  if (dtype != kDtypeFloat && dtype != kDtypePacked) malformed("unknown dtype " + std::to_string(dtype));
  Shape shape = read_shape(r);
  const std::size_t count = shape_product(shape);
  if (dtype == kDtypeFloat) {
    if (count > r.remaining() / 4) malformed("float payload shorter than the declared shape");
    std::vector<float> data(count);
    for (float& v : data) v = r.f32();
    return DenseTensor(std::move(shape), std::move(data));
  }
  QuantizedTensor q;
  q.shape = std::move(shape);
  q.bits = r.u8();
  q.scale = r.f32();
  if (!is_supported_bits(q.bits)) malformed("unsupported bit width " + std::to_string(q.bits));
  const auto payload = r.bytes(packed_size(count, q.bits));
  q.payload.assign(payload.begin(), payload.end());
  try {
    q.validate();
  } catch (const Error& e) {
    malformed(e.what());
  }
  return q;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const StoredLocal& tensor) {
  Writer w;
  w.bytes(kTensorMagic);
  write_body(w, tensor);
  return w.take();
}

StoredLocal decode_tensor(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic(kTensorMagic);
  StoredLocal t = read_body(r);
  r.finish();
  return t;
}

DenseTensor decode_dense_tensor(std::span<const std::uint8_t> bytes) {
  StoredLocal t = decode_tensor(bytes);
  if (!std::holds_alternative<DenseTensor>(t)) malformed("expected a float tensor, found a packed one");
  return std::get<DenseTensor>(std::move(t));
}

std::vector<std::uint8_t> encode_quantized_mpo(const QuantizedMpo& q) {
  q.validate();
  if (q.plan.n() > 255) malformed("chain length above 255");
  Writer w;
  w.bytes(kMpoMagic);
  w.u8(kQuantizedMpoVersion);
  w.u8(static_cast<std::uint8_t>(q.plan.n()));
  for (std::size_t f : q.plan.i_factors) w.u64(f);
  for (std::size_t f : q.plan.j_factors) w.u64(f);
  w.u8(static_cast<std::uint8_t>(q.bits));
  for (const auto& l : q.locals) w.u8(std::holds_alternative<QuantizedTensor>(l) ? 1 : 0);
  for (const auto& l : q.locals) write_body(w, l);
  return w.take();
}

QuantizedMpo decode_quantized_mpo(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic(kMpoMagic);
  const std::uint8_t version = r.u8();
  if (version != kQuantizedMpoVersion) malformed("unsupported DQZ1 version " + std::to_string(version));
  const std::size_t n = r.u8();
  QuantizedMpo q;
  q.plan.i_factors.resize(n);
  q.plan.j_factors.resize(n);
  for (auto& f : q.plan.i_factors) f = static_cast<std::size_t>(r.u64());
  for (auto& f : q.plan.j_factors) f = static_cast<std::size_t>(r.u64());
  q.bits = r.u8();
  std::vector<std::uint8_t> flags(n);
  for (auto& f : flags) {
    f = r.u8();
    if (f > 1) malformed("local flag must be 0 or 1");
  }
  for (std::size_t k = 0; k < n; ++k) {
    q.locals.push_back(read_body(r));
    if (std::holds_alternative<QuantizedTensor>(q.locals.back()) != (flags[k] == 1)) {
      malformed("local " + std::to_string(k) + " disagrees with its flag");
    }
  }
  r.finish();
  try {
    q.validate();
  } catch (const Error& e) {
    malformed(e.what());
  }
  return q;
}

DenseTensor import_raw_f32(std::span<const std::uint8_t> bytes, const Shape& shape) {
  const std::size_t count = shape_product(shape);
  if (bytes.size() != count * 4) {
    malformed("raw dump has " + std::to_string(bytes.size()) + " bytes, shape " + shape_string(shape) + " needs " +
              std::to_string(count * 4));
  }
  Reader r(bytes);
  std::vector<float> data(count);
  for (float& v : data) v = r.f32();
  return DenseTensor(shape, std::move(data));
}

std::vector<std::uint8_t> export_raw_f32(const DenseTensor& t) {
  Writer w;
  for (float v : t.data()) w.f32(v);
  return w.take();
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) malformed("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) malformed("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) malformed("write failed for " + path.string());
}

}  // namespace decoquant
