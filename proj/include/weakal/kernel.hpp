#pragma once

#include <cmath>
#include <utility>

#include <Eigen/Core>

#include "weakal/cholesky.hpp"
#include "weakal/errors.hpp"

namespace weakal {

/// RBF hyperparameters. Optimizers work on (log a, log l).
template <typename Scalar>
struct KernelParams {
  Scalar amplitude{1};
  Scalar length_scale{1};

  static KernelParams from_log(Scalar log_amplitude, Scalar log_length_scale) {
    return {std::exp(log_amplitude), std::exp(log_length_scale)};
  }

  Eigen::Matrix<Scalar, 2, 1> log_params() const {
    return {std::log(amplitude), std::log(length_scale)};
  }

  void validate() const {
    if (!(amplitude > Scalar(0)) || !(length_scale > Scalar(0))) {
      throw InvalidArgument("kernel amplitude and length scale must be positive");
    }
  }

  bool operator==(const KernelParams&) const = default;
};

/// K(x, x') = a^2 exp(-2 |x - x'|^2 / l^2). The factor 2 in the exponent is
/// deliberate; length scales in the shipped experiments are tuned to it.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar rbf(const Eigen::MatrixBase<DerivedA>& xi,
                              const Eigen::MatrixBase<DerivedB>& xj,
                              const KernelParams<typename DerivedA::Scalar>& p) {
  using Scalar = typename DerivedA::Scalar;
  if (xi.size() != xj.size()) {
    throw DimensionMismatch("rbf: input dimensions differ");
  }
  const Scalar sq = (xi - xj).squaredNorm();
  const Scalar scale = Scalar(-2) / (p.length_scale * p.length_scale);
  return p.amplitude * p.amplitude * std::exp(scale * sq);
}

/// Kernel values between every row of `xs` and the point `x`.
template <typename DerivedX, typename DerivedP>
Vector<typename DerivedX::Scalar> kernel_column(
    const Eigen::MatrixBase<DerivedX>& xs, const Eigen::MatrixBase<DerivedP>& x,
    const KernelParams<typename DerivedX::Scalar>& p) {
  using Scalar = typename DerivedX::Scalar;
  if (xs.cols() != x.size()) {
    throw DimensionMismatch("kernel_column: input dimensions differ");
  }
  const Scalar a2 = p.amplitude * p.amplitude;
  const Scalar scale = Scalar(-2) / (p.length_scale * p.length_scale);
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> row(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) row(i) = x(i);
  const Vector<Scalar> sq = (xs.rowwise() - row).rowwise().squaredNorm();
  return (a2 * (scale * sq.array()).exp()).matrix();
}

/// Rows of `a` against rows of `b`.
template <typename Scalar>
Matrix<Scalar> cross_kernel(const Matrix<Scalar>& a, const Matrix<Scalar>& b,
                            const KernelParams<Scalar>& p) {
  if (a.cols() != b.cols()) {
    throw DimensionMismatch("cross_kernel: input dimensions differ");
  }
  Matrix<Scalar> k(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    k.col(j) = kernel_column(a, b.row(j).transpose(), p);
  }
  return k;
}

template <typename Scalar>
Matrix<Scalar> kernel_matrix(const Matrix<Scalar>& xs, const KernelParams<Scalar>& p,
                             Scalar jitter = Scalar(0)) {
  if (xs.rows() == 0) throw InvalidArgument("kernel_matrix: no points");
  const Eigen::Index n = xs.rows();
  Matrix<Scalar> k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const Scalar v = rbf(xs.row(i), xs.row(j), p);
      k(i, j) = v;
      k(j, i) = v;
    }
    k(i, i) += jitter;
  }
  return k;
}

/// (dK/dlog a, dK/dlog l) without jitter.
template <typename Scalar>
std::pair<Matrix<Scalar>, Matrix<Scalar>> kernel_matrix_grad(const Matrix<Scalar>& xs,
                                                             const KernelParams<Scalar>& p) {
  const Matrix<Scalar> k = kernel_matrix(xs, p);
  const Eigen::Index n = xs.rows();
  Matrix<Scalar> d_length(n, n);
  const Scalar inv_l2 = Scalar(1) / (p.length_scale * p.length_scale);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const Scalar v = k(i, j) * Scalar(4) * inv_l2 * (xs.row(i) - xs.row(j)).squaredNorm();
      d_length(i, j) = v;
      d_length(j, i) = v;
    }
  }
  return {Scalar(2) * k, std::move(d_length)};
}

}  // namespace weakal
