// SPDX-License-Identifier: Apache-2.0
#include "decoquant/mpo.hpp"

#include <algorithm>
#include <string>

#include "decoquant/linalg.hpp"

namespace decoquant {
namespace {

std::size_t largest_divisor_upto(std::size_t value, std::size_t cap) {
  for (std::size_t d = std::min(cap, value); d > 1; --d) {
    if (value % d == 0) return d;
  }
  return 1;
}

std::vector<std::size_t> split_factors(std::size_t value, std::size_t n) {
  std::vector<std::size_t> factors;
  std::size_t rest = value;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const std::size_t d = largest_divisor_upto(rest, kPlanFactorCap);
    factors.push_back(d);
    rest /= d;
  }
  factors.push_back(rest);
  return factors;
}

std::vector<std::size_t> interleave_axes(std::size_t n) {
  std::vector<std::size_t> axes;
  for (std::size_t k = 0; k < n; ++k) {
    axes.push_back(k);
    axes.push_back(n + k);
  }
  return axes;
}

using RowMatrixD = RowMatrix<double>;

// Per-direction rescaling of an orthonormal factor so every column has
// max |value| == 1. Directions with a zero singular value are dropped to exact
// zeros (gauge 1), so a zero or low-rank input yields zero slices.
Eigen::VectorXd slice_gauge(Eigen::MatrixXd& factor, const Eigen::VectorXd& sigma) {
  Eigen::VectorXd gauge(sigma.size());
  for (Eigen::Index c = 0; c < sigma.size(); ++c) {
    if (sigma[c] == 0.0) {
      factor.col(c).setZero();
      gauge[c] = 1.0;
    } else {
      gauge[c] = factor.col(c).cwiseAbs().maxCoeff();
    }
  }
  return gauge;
}

DenseTensor to_local(const RowMatrixD& m, Shape shape) {
  std::vector<float> data(static_cast<std::size_t>(m.size()));
  for (Eigen::Index k = 0; k < m.size(); ++k) data[k] = static_cast<float>(m.data()[k]);
  return DenseTensor(std::move(shape), std::move(data));
}

}  // namespace

void ShapePlan::validate() const {
  if (i_factors.size() != j_factors.size() || i_factors.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "a plan needs matching factor lists of length >= 2");
  }
  for (std::size_t k = 0; k < n(); ++k) {
    if (i_factors[k] == 0 || j_factors[k] == 0) throw Error(ErrorCode::kInvalidArgument, "zero factor in plan");
  }
}

ShapePlan plan_shapes(std::size_t rows, std::size_t cols, std::size_t n) {
  if (rows == 0 || cols == 0) throw Error(ErrorCode::kInvalidArgument, "plan_shapes needs I, J >= 1");
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "decomposition length must be >= 2");
  return {split_factors(rows, n), split_factors(cols, n)};
}

std::vector<std::size_t> bond_dims(const ShapePlan& plan) {
  plan.validate();
  const std::size_t n = plan.n();
  std::vector<std::size_t> pair(n);
  for (std::size_t k = 0; k < n; ++k) pair[k] = plan.i_factors[k] * plan.j_factors[k];
  std::vector<std::size_t> dims(n + 1, 1);
  std::size_t left = 1;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    left *= pair[k];
    std::size_t right = 1;
    for (std::size_t l = k + 1; l < n; ++l) right *= pair[l];
    dims[k + 1] = std::min(left, right);
  }
  return dims;
}

std::vector<Shape> local_shapes(const ShapePlan& plan) {
  const auto d = bond_dims(plan);
  std::vector<Shape> shapes;
  for (std::size_t k = 0; k < plan.n(); ++k) {
    shapes.push_back({d[k], plan.i_factors[k], plan.j_factors[k], d[k + 1]});
  }
  return shapes;
}

std::size_t smallest_local(const ShapePlan& plan) {
  const auto shapes = local_shapes(plan);
  std::size_t best = 0;
  for (std::size_t k = 1; k < shapes.size(); ++k) {
    if (shape_product(shapes[k]) < shape_product(shapes[best])) best = k;
  }
  return best;
}

ShapePlan MpoChain::plan() const {
  ShapePlan p;
  for (const auto& t : locals) {
    p.i_factors.push_back(t.dim(1));
    p.j_factors.push_back(t.dim(2));
  }
  return p;
}

std::size_t MpoChain::parameter_count() const {
  std::size_t total = 0;
  for (const auto& t : locals) total += t.size();
  return total;
}

void MpoChain::validate() const {
  if (locals.empty()) throw Error(ErrorCode::kBondMismatch, "empty chain");
  for (std::size_t k = 0; k < locals.size(); ++k) {
    if (locals[k].rank() != 4) {
      throw Error(ErrorCode::kBondMismatch, "local " + std::to_string(k) + " is not 4-D");
    }
  }
  if (locals.front().dim(0) != 1 || locals.back().dim(3) != 1) {
    throw Error(ErrorCode::kBondMismatch, "boundary bonds must be 1");
  }
  for (std::size_t k = 0; k + 1 < locals.size(); ++k) {
    if (locals[k].dim(3) != locals[k + 1].dim(0)) {
      throw Error(ErrorCode::kBondMismatch, "bond " + std::to_string(k + 1) + ": " +
                                                std::to_string(locals[k].dim(3)) + " vs " +
                                                std::to_string(locals[k + 1].dim(0)));
    }
  }
}

MpoChain decompose(const DenseTensor& m, const ShapePlan& plan, std::size_t center) {
  plan.validate();
  const std::size_t n = plan.n();
  if (m.rank() != 2 || m.dim(0) != plan.rows() || m.dim(1) != plan.cols()) {
    throw Error(ErrorCode::kShapeMismatch,
                "matrix " + shape_string(m.shape()) + " does not match plan " +
                    std::to_string(plan.rows()) + "x" + std::to_string(plan.cols()));
  }
  if (center >= n) throw Error(ErrorCode::kInvalidArgument, "center outside the chain");
  if (!all_finite(m)) throw Error(ErrorCode::kNonFiniteInput, "decompose input has non-finite entries");

  Shape split = plan.i_factors;
  split.insert(split.end(), plan.j_factors.begin(), plan.j_factors.end());
  const auto axes = interleave_axes(n);
  Tensor<double> interleaved = permute(reshape(cast<double>(m), split), axes);

  // The carry is a row-major block whose rows are the left bond and whose
  // columns run over the not-yet-split (i_k, j_k) pairs.
  std::vector<double> carry(interleaved.data().begin(), interleaved.data().end());
  MpoChain chain;
  chain.locals.resize(n);

  std::size_t left_bond = 1;
  for (std::size_t k = 0; k < center; ++k) {
    const std::size_t rows = left_bond * plan.i_factors[k] * plan.j_factors[k];
    const std::size_t cols = carry.size() / rows;
    const Eigen::MatrixXd block =
        Eigen::Map<const RowMatrixD>(carry.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    auto f = linalg::jacobi_svd(block);
    const Eigen::Index r = f.s.size();
    const Eigen::VectorXd gauge = slice_gauge(f.u, f.s);
    RowMatrixD local = f.u * gauge.cwiseInverse().asDiagonal();
    chain.locals[k] = to_local(local, {left_bond, plan.i_factors[k], plan.j_factors[k], static_cast<std::size_t>(r)});
    RowMatrixD next = gauge.cwiseProduct(f.s).asDiagonal() * f.v.transpose();
    carry.assign(next.data(), next.data() + next.size());
    left_bond = static_cast<std::size_t>(r);
  }

  std::size_t right_bond = 1;
  std::size_t size = carry.size();
  for (std::size_t k = n - 1; k > center; --k) {
    const std::size_t cols = plan.i_factors[k] * plan.j_factors[k] * right_bond;
    const std::size_t rows = size / cols;
    const Eigen::MatrixXd block =
        Eigen::Map<const RowMatrixD>(carry.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    auto f = linalg::jacobi_svd(block);
    const Eigen::Index r = f.s.size();
    const Eigen::VectorXd gauge = slice_gauge(f.v, f.s);
    RowMatrixD local = gauge.cwiseInverse().asDiagonal() * f.v.transpose();
    chain.locals[k] = to_local(local, {static_cast<std::size_t>(r), plan.i_factors[k], plan.j_factors[k], right_bond});
    RowMatrixD next = f.u * gauge.cwiseProduct(f.s).asDiagonal();
    carry.assign(next.data(), next.data() + next.size());
    size = carry.size();
    right_bond = static_cast<std::size_t>(r);
  }

  std::vector<float> center_data(carry.begin(), carry.end());
  chain.locals[center] = DenseTensor({left_bond, plan.i_factors[center], plan.j_factors[center], right_bond},
                                     std::move(center_data));
  return chain;
}

MpoChain decompose(const DenseTensor& m, const ShapePlan& plan) {
  return decompose(m, plan, smallest_local(plan));
}

DenseTensor reconstruct(const MpoChain& chain) {
  chain.validate();
  const std::size_t n = chain.n();
  const ShapePlan plan = chain.plan();

  const auto& first = chain.locals.front();
  Tensor<double> acc = reshape(cast<double>(first), {first.size() / first.dim(3), first.dim(3)});
  for (std::size_t k = 1; k < n; ++k) {
    const auto& local = chain.locals[k];
    const std::size_t bond = local.dim(0);
    Tensor<double> rhs = reshape(cast<double>(local), {bond, local.size() / bond});
    acc = matmul(reshape(std::move(acc), {acc.size() / bond, bond}), rhs);
  }

  Shape interleaved;
  for (std::size_t k = 0; k < n; ++k) {
    interleaved.push_back(plan.i_factors[k]);
    interleaved.push_back(plan.j_factors[k]);
  }
  const auto inverse = inverse_permutation(interleave_axes(n));
  Tensor<double> split = permute(reshape(std::move(acc), interleaved), inverse);
  return cast<float>(reshape(std::move(split), {plan.rows(), plan.cols()}));
}

LargeSmallSplit split_large_small(const MpoChain& chain) {
  if (chain.n() != 2) throw Error(ErrorCode::kInvalidArgument, "split_large_small needs a chain of length 2");
  const bool first_is_large = chain.locals[0].size() > chain.locals[1].size();
  const std::size_t large = first_is_large ? 0 : 1;
  return {chain.locals[large], chain.locals[1 - large], large};
}

}  // namespace decoquant
