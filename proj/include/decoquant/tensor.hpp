// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "decoquant/error.hpp"

namespace decoquant {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k) s += ",";
    s += std::to_string(shape[k]);
  }
  return s + "]";
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-major N-dimensional dense array.
///
/// Value type: copies are deep and tensors can be moved between threads
/// freely. Zero-length axes are allowed so that empty contractions and empty
/// caches (0 x D) have a representation.
template <typename Scalar>
class Tensor {
 public:
  using value_type = Scalar;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_product(shape_), Scalar(0)) {}

  Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
      throw Error(ErrorCode::kSizeMismatch, "shape " + shape_string(shape_) + " holds " +
                                                std::to_string(shape_product(shape_)) +
                                                " elements, got " + std::to_string(data_.size()));
    }
  }

  /// 2-D tensor from nested rows, e.g. `Tensor<float>::from_rows({{1, 2}, {3, 4}})`.
  static Tensor from_rows(std::initializer_list<std::initializer_list<Scalar>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<Scalar> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw Error(ErrorCode::kSizeMismatch, "ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t k = 0; k < n; ++k) t.data_[k * n + k] = Scalar(1);
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const {
    require_matrix();
    return shape_[0];
  }
  std::size_t cols() const {
    require_matrix();
    return shape_[1];
  }

  std::span<const Scalar> data() const noexcept { return data_; }
  std::span<Scalar> data() noexcept { return data_; }
  const std::vector<Scalar>& values() const noexcept { return data_; }

  Scalar& operator[](std::size_t flat) { return data_[flat]; }
  const Scalar& operator[](std::size_t flat) const { return data_[flat]; }

  Scalar& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const Scalar& operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  Scalar& at(std::span<const std::size_t> index) { return data_[flat_index(index)]; }
  const Scalar& at(std::span<const std::size_t> index) const { return data_[flat_index(index)]; }

  /// Eigen view of a 2-D tensor (row-major, no copy).
  Eigen::Map<const RowMatrix<Scalar>> matrix() const {
    require_matrix();
    return {data_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1])};
  }
  Eigen::Map<RowMatrix<Scalar>> matrix() {
    require_matrix();
    return {data_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1])};
  }

  bool operator==(const Tensor& other) const = default;

 private:
  void require_matrix() const {
    if (shape_.size() != 2) {
      throw Error(ErrorCode::kShapeMismatch, "expected a 2-D tensor, got " + shape_string(shape_));
    }
  }

  std::size_t flat_index(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) throw Error(ErrorCode::kShapeMismatch, "index rank");
    std::size_t flat = 0;
    for (std::size_t k = 0; k < index.size(); ++k) {
      if (index[k] >= shape_[k]) throw Error(ErrorCode::kShapeMismatch, "index out of range");
      flat = flat * shape_[k] + index[k];
    }
    return flat;
  }

  Shape shape_;
  std::vector<Scalar> data_;
};

using DenseTensor = Tensor<float>;

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> data(t.size());
  std::transform(t.data().begin(), t.data().end(), data.begin(),
                 [](From v) { return static_cast<To>(v); });
  return Tensor<To>(t.shape(), std::move(data));
}

/// 2-D tensor copied out of any Eigen expression.
template <typename Scalar, typename Derived>
Tensor<Scalar> from_eigen(const Eigen::MatrixBase<Derived>& m) {
  Tensor<Scalar> t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.matrix() = m.template cast<Scalar>();
  return t;
}

template <typename Scalar>
Tensor<Scalar> reshape(Tensor<Scalar> t, Shape new_shape) {
  if (shape_product(new_shape) != t.size()) {
    throw Error(ErrorCode::kSizeMismatch,
                "cannot reshape " + shape_string(t.shape()) + " to " + shape_string(new_shape));
  }
  std::vector<Scalar> data(t.data().begin(), t.data().end());
  return Tensor<Scalar>(std::move(new_shape), std::move(data));
}

inline bool is_permutation_of_axes(std::span<const std::size_t> axes, std::size_t rank) {
  if (axes.size() != rank) return false;
  std::vector<bool> seen(rank, false);
  for (std::size_t a : axes) {
    if (a >= rank || seen[a]) return false;
    seen[a] = true;
  }
  return true;
}

inline std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> axes) {
  std::vector<std::size_t> inv(axes.size());
  for (std::size_t k = 0; k < axes.size(); ++k) inv[axes[k]] = k;
  return inv;
}

/// Output axis k is input axis `axes[k]`; the result is materialized row-major.
template <typename Scalar>
Tensor<Scalar> permute(const Tensor<Scalar>& t, std::span<const std::size_t> axes) {
  const std::size_t rank = t.rank();
  if (!is_permutation_of_axes(axes, rank)) {
    throw Error(ErrorCode::kInvalidPermutation, "axes are not a permutation of 0.." + std::to_string(rank));
  }
  Shape out_shape(rank);
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t k = rank; k-- > 1;) in_strides[k - 1] = in_strides[k] * t.shape()[k];
  std::vector<std::size_t> strides(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    out_shape[k] = t.shape()[axes[k]];
    strides[k] = in_strides[axes[k]];
  }
  Tensor<Scalar> out(out_shape);
  if (out.empty()) return out;

  // Odometer over the output; the innermost axis is walked as a strided run.
  const auto src = t.data();
  auto dst = out.data();
  const std::size_t inner = rank ? out_shape[rank - 1] : 1;
  const std::size_t inner_stride = rank ? strides[rank - 1] : 1;
  std::vector<std::size_t> idx(rank ? rank - 1 : 0, 0);
  std::size_t offset = 0;
  for (std::size_t o = 0; o < out.size(); o += inner) {
    for (std::size_t c = 0; c < inner; ++c) dst[o + c] = src[offset + c * inner_stride];
    for (std::size_t k = idx.size(); k-- > 0;) {
      offset += strides[k];
      if (++idx[k] < out_shape[k]) break;
      offset -= strides[k] * out_shape[k];
      idx[k] = 0;
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> permute(const Tensor<Scalar>& t, std::initializer_list<std::size_t> axes) {
  return permute(t, std::span<const std::size_t>(axes.begin(), axes.size()));
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& t) {
  if (t.rank() != 2) throw Error(ErrorCode::kShapeMismatch, "transpose needs a 2-D tensor");
  return permute(t, {1, 0});
}

/// Matrix product with 64-bit accumulation.
///
/// Every output element is summed in ascending order of the inner index, so a
/// row block of `a` produces bit-identical rows to the full product.
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw Error(ErrorCode::kShapeMismatch, "matmul needs 2-D operands");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (k != b.dim(0)) {
    throw Error(ErrorCode::kShapeMismatch,
                "inner dimensions differ: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor<Scalar> out({m, n});
  std::vector<double> acc(n);
  const auto av = a.data();
  const auto bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double s = static_cast<double>(av[i * k + p]);
      if (s == 0.0) continue;
      const Scalar* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += s * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < n; ++j) ov[i * n + j] = static_cast<Scalar>(acc[j]);
  }
  return out;
}

template <typename Scalar>
double frobenius_norm(const Tensor<Scalar>& t) {
  double s = 0.0;
  for (Scalar v : t.data()) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

/// ||a - b||_F; shapes must agree.
template <typename Scalar>
double frobenius_distance(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::kShapeMismatch, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    s += d * d;
  }
  return std::sqrt(s);
}

template <typename Scalar>
double relative_error(const Tensor<Scalar>& reference, const Tensor<Scalar>& approx) {
  const double ref = frobenius_norm(reference);
  const double diff = frobenius_distance(reference, approx);
  return ref > 0.0 ? diff / ref : diff;
}

template <typename Scalar>
double max_abs(const Tensor<Scalar>& t) {
  double m = 0.0;
  for (Scalar v : t.data()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](Scalar v) { return std::isfinite(v); });
}

/// Stacks 2-D tensors with equal column counts. `cols` fixes the width when
/// `parts` is empty.
template <typename Scalar>
Tensor<Scalar> concat_rows(std::span<const Tensor<Scalar>> parts, std::size_t cols) {
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != cols) throw Error(ErrorCode::kShapeMismatch, "concat_rows width");
    rows += p.dim(0);
  }
  std::vector<Scalar> data;
  data.reserve(rows * cols);
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return Tensor<Scalar>({rows, cols}, std::move(data));
}

}  // namespace decoquant
