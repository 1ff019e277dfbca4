#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "weakal/errors.hpp"
#include "weakal/types.hpp"

namespace weakal {

/// Lower Cholesky factor built row by row (Cholesky-Banachiewicz).
///
/// A full factorization is exactly a sequence of append() calls, so a factor
/// grown one training point at a time is bit-identical to one computed from
/// the final matrix in a single pass.
template <typename Scalar>
class CholeskyFactor {
 public:
  using Index = Eigen::Index;

  CholeskyFactor() = default;

  Index dim() const { return static_cast<Index>(rows_.size()); }
  Scalar log_determinant() const { return log_det_; }

  /// Row i of L, length i + 1.
  const Vector<Scalar>& row(Index i) const { return rows_[static_cast<std::size_t>(i)]; }

  /// Extends the factor by one row. `row` holds A(n, 0..n) of the enlarged
  /// matrix, diagonal last. Leaves the factor untouched on failure.
  template <typename Derived>
  void append(const Eigen::MatrixBase<Derived>& a_row) {
    const Index n = dim();
    if (a_row.size() != n + 1) {
      throw DimensionMismatch("CholeskyFactor::append: row has wrong length");
    }
    Vector<Scalar> l(n + 1);
    for (Index j = 0; j < n; ++j) {
      const auto& lj = rows_[static_cast<std::size_t>(j)];
      l(j) = (a_row(j) - l.head(j).dot(lj.head(j))) / lj(j);
    }
    const Scalar pivot = a_row(n) - l.head(n).squaredNorm();
    if (!(pivot > Scalar(0))) {
      throw NotPositiveDefinite(static_cast<std::size_t>(n), static_cast<double>(pivot));
    }
    l(n) = std::sqrt(pivot);
    log_det_ += Scalar(2) * std::log(l(n));
    rows_.push_back(std::move(l));
  }

  /// Solves L z = b.
  Vector<Scalar> solve_lower(const Vector<Scalar>& b) const {
    check_rhs(b.size());
    Vector<Scalar> z(b.size());
    for (Index i = 0; i < dim(); ++i) {
      const auto& li = rows_[static_cast<std::size_t>(i)];
      z(i) = (b(i) - li.head(i).dot(z.head(i))) / li(i);
    }
    return z;
  }

  /// Solves L^T x = z, column-sweeping so only rows of L are touched.
  Vector<Scalar> solve_upper(const Vector<Scalar>& z) const {
    check_rhs(z.size());
    Vector<Scalar> r = z;
    Vector<Scalar> x(z.size());
    for (Index j = dim() - 1; j >= 0; --j) {
      const auto& lj = rows_[static_cast<std::size_t>(j)];
      x(j) = r(j) / lj(j);
      r.head(j) -= x(j) * lj.head(j);
    }
    return x;
  }

  /// Solves (L L^T) x = b.
  Vector<Scalar> solve(const Vector<Scalar>& b) const { return solve_upper(solve_lower(b)); }

  /// Dense lower-triangular L.
  Matrix<Scalar> lower() const {
    Matrix<Scalar> l = Matrix<Scalar>::Zero(dim(), dim());
    for (Index i = 0; i < dim(); ++i) {
      l.row(i).head(i + 1) = rows_[static_cast<std::size_t>(i)].transpose();
    }
    return l;
  }

  Matrix<Scalar> reconstruct() const {
    const Matrix<Scalar> l = lower();
    return l * l.transpose();
  }

  /// (L L^T)^{-1}, formed column by column.
  Matrix<Scalar> inverse() const {
    Matrix<Scalar> inv(dim(), dim());
    for (Index j = 0; j < dim(); ++j) {
      inv.col(j) = solve(Vector<Scalar>::Unit(dim(), j));
    }
    return inv;
  }

 private:
  void check_rhs(Index size) const {
    if (size != dim()) {
      throw DimensionMismatch("CholeskyFactor: right-hand side has wrong length");
    }
  }

  std::vector<Vector<Scalar>> rows_;
  Scalar log_det_{0};
};

/// Factors a symmetric positive definite matrix. Only the lower triangle is read
/// after the symmetry check.
template <typename Derived>
CholeskyFactor<typename Derived::Scalar> cholesky_factor(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("cholesky_factor: matrix is not square");
  }
  if (m.size() == 0) return {};
  const Scalar scale = m.cwiseAbs().maxCoeff();
  if (scale > Scalar(0) &&
      (m - m.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * scale) {
    throw InvalidArgument("cholesky_factor: matrix is not symmetric");
  }
  CholeskyFactor<Scalar> factor;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    factor.append(m.row(i).head(i + 1).transpose());
  }
  return factor;
}

template <typename Scalar>
Vector<Scalar> cholesky_solve(const CholeskyFactor<Scalar>& factor, const Vector<Scalar>& rhs) {
  return factor.solve(rhs);
}

}  // namespace weakal
