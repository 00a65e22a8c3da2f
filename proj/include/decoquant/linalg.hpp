// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include <Eigen/Core>

#include "decoquant/tensor.hpp"

namespace decoquant {

/// Thin SVD m = u * diag(singular_values) * vt with r = min(I, J).
template <typename Scalar>
struct SvdResult {
  Tensor<Scalar> u;                     // I x r, orthonormal columns
  std::vector<Scalar> singular_values;  // r, nonincreasing, >= 0
  Tensor<Scalar> vt;                    // r x J, orthonormal rows
};

/// Thin QR m = q * rmat with r = min(I, J); diag(rmat) >= 0.
template <typename Scalar>
struct QrResult {
  Tensor<Scalar> q;     // I x r, orthonormal columns
  Tensor<Scalar> rmat;  // r x J, upper trapezoidal
};

inline constexpr int kJacobiMaxSweeps = 60;
inline constexpr double kJacobiTolerance = 1e-10;

/// One-sided Jacobi SVD, computed in double precision whatever `Scalar` is.
/// Tall inputs are first reduced with Householder QR; wide inputs are handled
/// through their transpose. Throws NoConvergence after kJacobiMaxSweeps.
template <typename Scalar>
SvdResult<Scalar> svd(const Tensor<Scalar>& m);

/// Householder QR, computed in double precision.
template <typename Scalar>
QrResult<Scalar> qr(const Tensor<Scalar>& m);

extern template SvdResult<float> svd(const Tensor<float>&);
extern template SvdResult<double> svd(const Tensor<double>&);
extern template QrResult<float> qr(const Tensor<float>&);
extern template QrResult<double> qr(const Tensor<double>&);

namespace linalg {

struct EigenSvd {
  Eigen::MatrixXd u;
  Eigen::VectorXd s;
  Eigen::MatrixXd v;  // not transposed
};

struct EigenQr {
  Eigen::MatrixXd q;
  Eigen::MatrixXd r;
};

/// Column-major kernels behind svd()/qr(). Exposed so callers that already
/// hold double-precision Eigen data can skip the tensor round trip.
EigenSvd jacobi_svd(const Eigen::MatrixXd& a);
EigenQr householder_qr(const Eigen::MatrixXd& a);

}  // namespace linalg
}  // namespace decoquant
