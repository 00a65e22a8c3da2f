// SPDX-License-Identifier: Apache-2.0
#include "decoquant/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Jacobi>

namespace decoquant {
namespace linalg {
namespace {

// Fills the columns flagged in `missing` with unit vectors orthogonal to the
// others. Used for directions belonging to zero singular values.
void complete_orthonormal(Eigen::MatrixXd& basis, const std::vector<bool>& missing) {
  const Eigen::Index n = basis.rows();
  std::vector<Eigen::Index> accepted;
  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    if (!missing[c]) accepted.push_back(c);
  }
  Eigen::Index candidate = 0;
  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    if (!missing[c]) continue;
    for (; candidate < n; ++candidate) {
      Eigen::VectorXd v = Eigen::VectorXd::Unit(n, candidate);
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index a : accepted) v -= basis.col(a).dot(v) * basis.col(a);
      }
      const double norm = v.norm();
      if (norm > 1e-6) {
        basis.col(c) = v / norm;
        accepted.push_back(c);
        ++candidate;
        break;
      }
    }
  }
}

// a is square (n x n); returns u, s (sorted), v with a = u diag(s) v^T.
EigenSvd jacobi_square(Eigen::MatrixXd w) {
  const Eigen::Index n = w.cols();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd norms(n);

  bool converged = n < 2;
  for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
    for (Eigen::Index j = 0; j < n; ++j) norms[j] = w.col(j).squaredNorm();
    // Columns at roundoff level relative to the whole matrix count as zero;
    // rotating them against each other never settles.
    const double eps = std::numeric_limits<double>::epsilon();
    const double negligible = eps * eps * norms.sum();
    converged = true;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = norms[p];
        const double beta = norms[q];
        if (alpha <= negligible || beta <= negligible) continue;
        const double gamma = w.col(p).dot(w.col(q));
        if (std::abs(gamma) <= kJacobiTolerance * std::sqrt(alpha * beta)) continue;
        converged = false;

        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;

        // col_p <- c col_p - s col_q, col_q <- s col_p + c col_q
        const Eigen::JacobiRotation<double> rot(c, s);
        w.applyOnTheRight(p, q, rot);
        v.applyOnTheRight(p, q, rot);

        norms[p] = alpha - t * gamma;
        norms[q] = beta + t * gamma;
      }
    }
  }
  if (!converged) {
    throw Error(ErrorCode::kNoConvergence,
                "Jacobi SVD did not converge in " + std::to_string(kJacobiMaxSweeps) + " sweeps");
  }

  Eigen::VectorXd sigma(n);
  for (Eigen::Index j = 0; j < n; ++j) sigma[j] = w.col(j).norm();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return sigma[a] > sigma[b]; });

  EigenSvd out{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n), Eigen::MatrixXd(n, n)};
  const double cutoff = (n ? sigma[order[0]] : 0.0) * 1e-13;
  std::vector<bool> missing(n, false);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index j = order[k];
    out.v.col(k) = v.col(j);
    if (sigma[j] > cutoff && sigma[j] > 0.0) {
      out.s[k] = sigma[j];
      out.u.col(k) = w.col(j) / sigma[j];
    } else {
      missing[k] = true;
    }
  }
  complete_orthonormal(out.u, missing);
  return out;
}

}  // namespace

EigenQr householder_qr(const Eigen::MatrixXd& a) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  const Eigen::Index r = std::min(m, n);
  Eigen::MatrixXd work = a;
  std::vector<Eigen::VectorXd> reflectors(r);

  for (Eigen::Index k = 0; k < r; ++k) {
    Eigen::VectorXd x = work.col(k).tail(m - k);
    const double norm_x = x.norm();
    if (norm_x == 0.0) continue;
    const double alpha = x[0] >= 0.0 ? -norm_x : norm_x;
    x[0] -= alpha;
    const double norm_v = x.norm();
    if (norm_v == 0.0) continue;
    x /= norm_v;
    auto block = work.bottomRightCorner(m - k, n - k);
    const Eigen::RowVectorXd proj = x.transpose() * block;
    block.noalias() -= 2.0 * x * proj;
    reflectors[k] = std::move(x);
  }

  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(m, r);
  for (Eigen::Index k = r; k-- > 0;) {
    const Eigen::VectorXd& v = reflectors[k];
    if (v.size() == 0) continue;
    auto block = q.bottomRows(m - k);
    const Eigen::RowVectorXd proj = v.transpose() * block;
    block.noalias() -= 2.0 * v * proj;
  }

  Eigen::MatrixXd rmat = work.topRows(r).triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < r; ++k) {
    if (rmat(k, k) < 0.0) {
      rmat.row(k) *= -1.0;
      q.col(k) *= -1.0;
    }
  }
  return {std::move(q), std::move(rmat)};
}

EigenSvd jacobi_svd(const Eigen::MatrixXd& a) {
  if (!a.allFinite()) throw Error(ErrorCode::kNonFiniteInput, "svd input has non-finite entries");
  if (a.rows() < a.cols()) {
    EigenSvd t = jacobi_svd(a.transpose());
    std::swap(t.u, t.v);
    return t;
  }
  if (a.cols() == 0) {
    return {Eigen::MatrixXd(a.rows(), 0), Eigen::VectorXd(0), Eigen::MatrixXd(0, 0)};
  }
  // Tall: a = Q R, R = Ur S V^T  =>  a = (Q Ur) S V^T.
  EigenQr f = householder_qr(a);
  EigenSvd core = jacobi_square(std::move(f.r));
  core.u = f.q * core.u;
  return core;
}

}  // namespace linalg

namespace {

Eigen::MatrixXd to_eigen(const auto& t) {
  return t.matrix().template cast<double>();
}

}  // namespace

template <typename Scalar>
SvdResult<Scalar> svd(const Tensor<Scalar>& m) {
  if (m.rank() != 2) throw Error(ErrorCode::kShapeMismatch, "svd needs a 2-D tensor");
  linalg::EigenSvd f = linalg::jacobi_svd(to_eigen(m));
  SvdResult<Scalar> out;
  out.u = from_eigen<Scalar>(f.u);
  out.vt = from_eigen<Scalar>(f.v.transpose());
  out.singular_values.resize(static_cast<std::size_t>(f.s.size()));
  for (Eigen::Index k = 0; k < f.s.size(); ++k) out.singular_values[k] = static_cast<Scalar>(f.s[k]);
  return out;
}

template <typename Scalar>
QrResult<Scalar> qr(const Tensor<Scalar>& m) {
  if (m.rank() != 2) throw Error(ErrorCode::kShapeMismatch, "qr needs a 2-D tensor");
  if (!all_finite(m)) throw Error(ErrorCode::kNonFiniteInput, "qr input has non-finite entries");
  linalg::EigenQr f = linalg::householder_qr(to_eigen(m));
  return {from_eigen<Scalar>(f.q), from_eigen<Scalar>(f.r)};
}

template SvdResult<float> svd(const Tensor<float>&);
template SvdResult<double> svd(const Tensor<double>&);
template QrResult<float> qr(const Tensor<float>&);
template QrResult<double> qr(const Tensor<double>&);

}  // namespace decoquant
