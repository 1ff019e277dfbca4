#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>

#include <Eigen/Core>

#include "weakal/cholesky.hpp"
#include "weakal/errors.hpp"
#include "weakal/kernel.hpp"

namespace weakal {

/// Observation noise of a weak regression annotation: sigma^2(x) + beta, where
/// beta = gamma / alpha is the precision-dependent add-on (beta = 0 is alpha -> inf).
template <typename Scalar>
struct NoiseModel {
  std::function<Scalar(const Vector<Scalar>&)> base_variance;
  Scalar gamma{1};

  static NoiseModel constant(Scalar variance, Scalar gamma) {
    return {[variance](const Vector<Scalar>&) { return variance; }, gamma};
  }
};

template <typename Scalar>
struct WeakRegressionDataset {
  Matrix<Scalar> xs;  // one row per point
  Vector<Scalar> ys;
  Vector<Scalar> betas;

  Eigen::Index size() const { return ys.size(); }
  bool empty() const { return ys.size() == 0; }

  void append(const Vector<Scalar>& x, Scalar y, Scalar beta) {
    if (!empty() && x.size() != xs.cols()) {
      throw DimensionMismatch("WeakRegressionDataset::append: input dimension differs");
    }
    const Eigen::Index n = size();
    xs.conservativeResize(n + 1, x.size());
    xs.row(n) = x.transpose();
    ys.conservativeResize(n + 1);
    ys(n) = y;
    betas.conservativeResize(n + 1);
    betas(n) = beta;
  }

  void validate() const {
    if (xs.rows() != ys.size() || betas.size() != ys.size()) {
      throw DimensionMismatch("WeakRegressionDataset: field lengths differ");
    }
    if ((betas.array() < Scalar(0)).any()) {
      throw InvalidArgument("WeakRegressionDataset: negative beta");
    }
  }
};

template <typename Scalar>
Vector<Scalar> noise_diagonal(const WeakRegressionDataset<Scalar>& data,
                              const NoiseModel<Scalar>& nm) {
  Vector<Scalar> d(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    d(i) = nm.base_variance(data.xs.row(i).transpose()) + data.betas(i);
  }
  return d;
}

/// K + diag(sigma^2(x_i) + beta_i) + jitter I.
template <typename Scalar>
Matrix<Scalar> noisy_kernel_matrix(const WeakRegressionDataset<Scalar>& data,
                                   const KernelParams<Scalar>& kp, const NoiseModel<Scalar>& nm,
                                   Scalar jitter) {
  Matrix<Scalar> m = kernel_matrix(data.xs, kp, jitter);
  m.diagonal() += noise_diagonal(data, nm);
  return m;
}

/// Exact GP posterior under heterogeneous Gaussian noise. Immutable once built.
template <typename Scalar>
class FittedRegressor {
 public:
  FittedRegressor(WeakRegressionDataset<Scalar> data, KernelParams<Scalar> kp,
                  NoiseModel<Scalar> nm, Scalar jitter)
      : data_(std::move(data)), kernel_(kp), noise_(std::move(nm)), jitter_(jitter) {
    data_.validate();
    kernel_.validate();
    if (!data_.empty()) {
      factor_ = cholesky_factor(noisy_kernel_matrix(data_, kernel_, noise_, jitter_));
      weights_ = factor_.solve(data_.ys);
    }
  }

  const WeakRegressionDataset<Scalar>& data() const { return data_; }
  const KernelParams<Scalar>& kernel() const { return kernel_; }
  const NoiseModel<Scalar>& noise() const { return noise_; }
  const CholeskyFactor<Scalar>& factor() const { return factor_; }
  const Vector<Scalar>& weights() const { return weights_; }

  /// Latent predictive moments of f(x); variance clamped at zero.
  GaussianMoments<Scalar> predict_latent(const Vector<Scalar>& x) const {
    const Scalar prior = kernel_.amplitude * kernel_.amplitude;
    if (data_.empty()) return {Scalar(0), prior};
    if (x.size() != data_.xs.cols()) {
      throw DimensionMismatch("predict_latent: input dimension differs from training data");
    }
    const Vector<Scalar> k = kernel_column(data_.xs, x, kernel_);
    const Vector<Scalar> v = factor_.solve_lower(k);
    return {k.dot(weights_), std::max(Scalar(0), prior - v.squaredNorm())};
  }

  /// Predictive distribution of a weak annotation taken at inverse-precision beta.
  GaussianMoments<Scalar> predict_weak(const Vector<Scalar>& x, Scalar beta) const {
    if (!(beta >= Scalar(0))) throw InvalidArgument("predict_weak: beta must be nonnegative");
    const auto latent = predict_latent(x);
    return {latent.mean, latent.variance + noise_.base_variance(x) + beta};
  }

 private:
  WeakRegressionDataset<Scalar> data_;
  KernelParams<Scalar> kernel_;
  NoiseModel<Scalar> noise_;
  Scalar jitter_;
  CholeskyFactor<Scalar> factor_;
  Vector<Scalar> weights_;
};

template <typename Scalar>
FittedRegressor<Scalar> fit(const WeakRegressionDataset<Scalar>& data,
                            const KernelParams<Scalar>& kp, const NoiseModel<Scalar>& nm,
                            Scalar jitter = Scalar(1e-8)) {
  return FittedRegressor<Scalar>(data, kp, nm, jitter);
}

/// log|M| + y^T M^{-1} y with M = K + diag(sigma^2 + beta). The constant
/// n log(2 pi) and the factor 1/2 are dropped.
template <typename Scalar>
Scalar nll(const WeakRegressionDataset<Scalar>& data, const KernelParams<Scalar>& kp,
           const NoiseModel<Scalar>& nm, Scalar jitter = Scalar(1e-8)) {
  if (data.empty()) throw InvalidArgument("nll: empty dataset");
  const auto factor = cholesky_factor(noisy_kernel_matrix(data, kp, nm, jitter));
  const Vector<Scalar> z = factor.solve_lower(data.ys);
  return factor.log_determinant() + z.squaredNorm();
}

/// Gradient of nll() with respect to (log a, log l).
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> nll_grad(const WeakRegressionDataset<Scalar>& data,
                                     const KernelParams<Scalar>& kp, const NoiseModel<Scalar>& nm,
                                     Scalar jitter = Scalar(1e-8)) {
  if (data.empty()) throw InvalidArgument("nll_grad: empty dataset");
  const auto factor = cholesky_factor(noisy_kernel_matrix(data, kp, nm, jitter));
  const Matrix<Scalar> m_inv = factor.inverse();
  const Vector<Scalar> w = factor.solve(data.ys);
  const auto [d_amp, d_len] = kernel_matrix_grad(data.xs, kp);
  auto component = [&](const Matrix<Scalar>& dk) {
    return m_inv.cwiseProduct(dk).sum() - w.dot(dk * w);
  };
  return {component(d_amp), component(d_len)};
}

struct AdamConfig {
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double relative_tolerance = 5e-2;
  double gradient_tolerance = 1e-5;
  int max_epochs = 100;
};

enum class AdamStop { relative_improvement, small_gradient, max_epochs };

template <typename Scalar>
struct HyperparameterFit {
  KernelParams<Scalar> params;
  int epochs = 0;
  Scalar initial_nll{};
  Scalar final_nll{};
  AdamStop reason = AdamStop::max_epochs;
};

/// Adam on (log a, log l). One epoch evaluates the NLL and its gradient at the
/// current iterate, checks the stopping rules, then steps. The returned
/// parameters are the best evaluated iterate, which on a relative-improvement
/// stop is the last one unless that epoch made the NLL worse.
template <typename Scalar>
HyperparameterFit<Scalar> fit_hyperparams(const WeakRegressionDataset<Scalar>& data,
                                          const KernelParams<Scalar>& init,
                                          const NoiseModel<Scalar>& nm, const AdamConfig& adam,
                                          Scalar jitter = Scalar(1e-8)) {
  using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
  init.validate();
  Vec2 theta = init.log_params();
  Vec2 m = Vec2::Zero();
  Vec2 v = Vec2::Zero();

  HyperparameterFit<Scalar> result;
  Vec2 best_theta = theta;
  Scalar best_nll = std::numeric_limits<Scalar>::infinity();
  Scalar prev_nll = std::numeric_limits<Scalar>::quiet_NaN();

  for (int epoch = 1; epoch <= adam.max_epochs; ++epoch) {
    const auto params = KernelParams<Scalar>::from_log(theta(0), theta(1));
    const Scalar current = nll(data, params, nm, jitter);
    const Vec2 grad = nll_grad(data, params, nm, jitter);
    result.epochs = epoch;
    if (epoch == 1) result.initial_nll = current;
    if (current < best_nll) {
      best_nll = current;
      best_theta = theta;
    }

    if (epoch > 1) {
      const Scalar denom = std::max({std::abs(prev_nll), std::abs(current), Scalar(1)});
      if ((prev_nll - current) / denom <= Scalar(adam.relative_tolerance)) {
        result.reason = AdamStop::relative_improvement;
        break;
      }
    }
    if (grad.cwiseAbs().maxCoeff() <= Scalar(adam.gradient_tolerance)) {
      result.reason = AdamStop::small_gradient;
      break;
    }

    m = Scalar(adam.beta1) * m + (Scalar(1) - Scalar(adam.beta1)) * grad;
    v = Scalar(adam.beta2) * v + (Scalar(1) - Scalar(adam.beta2)) * grad.cwiseAbs2();
    const Scalar m_corr = Scalar(1) - std::pow(Scalar(adam.beta1), epoch);
    const Scalar v_corr = Scalar(1) - std::pow(Scalar(adam.beta2), epoch);
    const Vec2 m_hat = m / m_corr;
    const Vec2 v_hat = v / v_corr;
    theta -= Scalar(adam.learning_rate) *
             (m_hat.array() / (v_hat.array().sqrt() + Scalar(adam.epsilon))).matrix();
    prev_nll = current;
  }

  result.params = KernelParams<Scalar>::from_log(best_theta(0), best_theta(1));
  result.final_nll = best_nll;
  return result;
}

/// GP posterior grown one training point at a time, tracking latent variances
/// at a fixed candidate set and predictive means at a fixed probe set.
///
/// Each append costs O(n (candidates + probes)) instead of a refactorization:
/// with V = L^{-1} K(train, candidates), a new training point adds one row to V
/// and subtracts its square from every candidate variance. Probe means are
/// W^T z with W = L^{-1} K(train, probes) and z = L^{-1} y, grown the same way.
template <typename Scalar>
class IncrementalRegressor {
 public:
  using Index = Eigen::Index;

  IncrementalRegressor(KernelParams<Scalar> kp, NoiseModel<Scalar> nm, Matrix<Scalar> candidates,
                       Matrix<Scalar> probes, Scalar jitter, Index capacity = 16)
      : kernel_(kp),
        noise_(std::move(nm)),
        candidates_(std::move(candidates)),
        probes_(std::move(probes)),
        jitter_(jitter) {
    kernel_.validate();
    const Scalar prior = kernel_.amplitude * kernel_.amplitude;
    candidate_var_ = Vector<Scalar>::Constant(candidates_.rows(), prior);
    probe_mean_ = Vector<Scalar>::Zero(probes_.rows());
    reserve(std::max<Index>(capacity, 1));
  }

  Index size() const { return data_.size(); }
  const WeakRegressionDataset<Scalar>& data() const { return data_; }
  const KernelParams<Scalar>& kernel() const { return kernel_; }

  void append(const Vector<Scalar>& x, Scalar y, Scalar beta) {
    if (x.size() != candidates_.cols()) {
      throw DimensionMismatch("IncrementalRegressor::append: input dimension differs");
    }
    const Index n = size();
    Vector<Scalar> a_row(n + 1);
    if (n > 0) a_row.head(n) = kernel_column(data_.xs, x, kernel_);
    a_row(n) = kernel_.amplitude * kernel_.amplitude + noise_.base_variance(x) + beta + jitter_;
    factor_.append(a_row);
    const Vector<Scalar>& l = factor_.row(n);

    if (n + 1 > capacity_) reserve(2 * capacity_);
    Vector<Scalar> col = kernel_column(candidates_, x, kernel_);
    if (n > 0) col.noalias() -= candidate_proj_.leftCols(n) * l.head(n);
    col /= l(n);
    candidate_proj_.col(n) = col;
    candidate_var_ -= col.cwiseAbs2();

    const Scalar z = (y - l.head(n).dot(z_.head(n))) / l(n);
    z_.conservativeResize(n + 1);
    z_(n) = z;
    if (probes_.rows() > 0) {
      Vector<Scalar> pcol = kernel_column(probes_, x, kernel_);
      if (n > 0) pcol.noalias() -= probe_proj_.leftCols(n) * l.head(n);
      pcol /= l(n);
      probe_proj_.col(n) = pcol;
      probe_mean_ += z * pcol;
    }

    data_.append(x, y, beta);
  }

  /// Latent posterior variance at candidate i, clamped at zero.
  Scalar candidate_variance(Index i) const { return std::max(Scalar(0), candidate_var_(i)); }

  const Vector<Scalar>& probe_means() const { return probe_mean_; }

 private:
  void reserve(Index capacity) {
    candidate_proj_.conservativeResize(candidates_.rows(), capacity);
    probe_proj_.conservativeResize(probes_.rows(), capacity);
    capacity_ = capacity;
  }

  KernelParams<Scalar> kernel_;
  NoiseModel<Scalar> noise_;
  Matrix<Scalar> candidates_;
  Matrix<Scalar> probes_;
  Scalar jitter_;
  WeakRegressionDataset<Scalar> data_;
  CholeskyFactor<Scalar> factor_;
  Matrix<Scalar> candidate_proj_;  // candidates x capacity, column i = row i of V
  Vector<Scalar> candidate_var_;
  Matrix<Scalar> probe_proj_;  // probes x capacity, column i = row i of W
  Vector<Scalar> probe_mean_;
  Vector<Scalar> z_;
  Index capacity_ = 0;
};

}  // namespace weakal
