#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "weakal/cholesky.hpp"
#include "weakal/errors.hpp"
#include "weakal/kernel.hpp"
#include "weakal/math.hpp"

namespace weakal {

/// Symmetric label-flip noise: a label is kept with probability
/// omega(alpha) = kappa + gamma * alpha, alpha in [0, 1].
template <typename Scalar>
struct FlipNoiseModel {
  Scalar kappa{0.8};
  Scalar gamma{0.2};

  Scalar omega(Scalar alpha) const { return kappa + gamma * alpha; }

  void validate() const {
    if (!(kappa > Scalar(0.5) || (kappa >= Scalar(0.5) && gamma > Scalar(0)))) {
      throw InvalidArgument("FlipNoiseModel: kappa must exceed 0.5 (or equal it with gamma > 0)");
    }
    if (!(gamma >= Scalar(0)) || !(kappa + gamma <= Scalar(1))) {
      throw InvalidArgument("FlipNoiseModel: need gamma >= 0 and kappa + gamma <= 1");
    }
  }
};

template <typename Scalar>
void check_keep_probability(Scalar omega) {
  if (!(omega > Scalar(0.5) && omega <= Scalar(1))) {
    throw InvalidArgument("keep probability must lie in (0.5, 1]");
  }
}

template <typename Scalar>
struct WeakClassificationDataset {
  Matrix<Scalar> xs;
  Vector<Scalar> labels;  // entries in {-1, +1}
  Vector<Scalar> omegas;  // per-label keep probabilities

  Eigen::Index size() const { return labels.size(); }
  bool empty() const { return labels.size() == 0; }

  void append(const Vector<Scalar>& x, Scalar label, Scalar omega) {
    if (!empty() && x.size() != xs.cols()) {
      throw DimensionMismatch("WeakClassificationDataset::append: input dimension differs");
    }
    check_keep_probability(omega);
    if (label != Scalar(1) && label != Scalar(-1)) {
      throw InvalidArgument("WeakClassificationDataset: label must be -1 or +1");
    }
    const Eigen::Index n = size();
    xs.conservativeResize(n + 1, x.size());
    xs.row(n) = x.transpose();
    labels.conservativeResize(n + 1);
    labels(n) = label;
    omegas.conservativeResize(n + 1);
    omegas(n) = omega;
  }

  void validate() const {
    if (xs.rows() != labels.size() || omegas.size() != labels.size()) {
      throw DimensionMismatch("WeakClassificationDataset: field lengths differ");
    }
    for (Eigen::Index i = 0; i < size(); ++i) {
      check_keep_probability(omegas(i));
      if (labels(i) != Scalar(1) && labels(i) != Scalar(-1)) {
        throw InvalidArgument("WeakClassificationDataset: label must be -1 or +1");
      }
    }
  }
};

template <typename Scalar>
struct TiltedMoments {
  Scalar z_tilde;  // normalizer of the tilted distribution
  Scalar mean;
  Scalar variance;
};

/// Moments of ((2w - 1) Phi(y f) + 1 - w) N(f; mu, var), normalized.
///
/// Written in terms of r = (2w - 1) N(z) / Z~ so that the clean-label limit
/// w = 1 stays finite far in the tail, where Phi(z) underflows.
template <typename Scalar>
TiltedMoments<Scalar> weak_moments(Scalar omega, Scalar label, Scalar mu_cav, Scalar var_cav) {
  check_keep_probability(omega);
  if (!(var_cav > Scalar(0))) throw InvalidArgument("weak_moments: cavity variance must be positive");
  const Scalar scale = std::sqrt(Scalar(1) + var_cav);
  const Scalar z = label * mu_cav / scale;
  const Scalar strength = Scalar(2) * omega - Scalar(1);
  const Scalar z_tilde = strength * std_normal_cdf(z) + (Scalar(1) - omega);
  Scalar r;
  if (z_tilde > Scalar(1e-300)) {
    r = strength * std_normal_pdf(z) / z_tilde;
  } else {
    // omega == 1 and z << 0: inverse Mills ratio N(z)/Phi(z) ~ -z - 1/z.
    r = -z - Scalar(1) / z;
  }
  const Scalar mean = mu_cav + var_cav * r * label / scale;
  const Scalar variance = var_cav - var_cav * var_cav * r / (Scalar(1) + var_cav) * (z + r);
  return {z_tilde, mean, variance};
}

namespace detail {

template <typename Scalar>
struct SitePosterior {
  CholeskyFactor<Scalar> factor;  // of B = I + S^{1/2} K S^{1/2}
  Matrix<Scalar> lower;
  Vector<Scalar> sqrt_precision;
  Matrix<Scalar> covariance;
  Vector<Scalar> mean;
};

/// Sigma = K - K S^{1/2} B^{-1} S^{1/2} K and mu = Sigma nu~, computed from scratch.
template <typename Scalar>
SitePosterior<Scalar> posterior_from_sites(const Matrix<Scalar>& prior,
                                           const Vector<Scalar>& precision,
                                           const Vector<Scalar>& shift) {
  SitePosterior<Scalar> post;
  post.sqrt_precision = precision.cwiseSqrt();
  Matrix<Scalar> b = post.sqrt_precision.asDiagonal() * prior * post.sqrt_precision.asDiagonal();
  b.diagonal().array() += Scalar(1);
  post.factor = cholesky_factor(b);
  post.lower = post.factor.lower();
  const Matrix<Scalar> v = post.lower.template triangularView<Eigen::Lower>().solve(
      post.sqrt_precision.asDiagonal() * prior);
  post.covariance = prior - v.transpose() * v;
  post.mean = post.covariance * shift;
  return post;
}

}  // namespace detail

struct EpOptions {
  int max_sweeps = 50;
  double tolerance = 1e-4;
};

/// Site parameters in natural form: precision tau~ and shift nu~.
template <typename Scalar>
struct EpSites {
  Vector<Scalar> precision;
  Vector<Scalar> shift;
};

/// Fitted EP posterior. Immutable; predictions follow the standard EP
/// predictive with B = I + S^{1/2} K S^{1/2}, S = diag(tau~).
template <typename Scalar>
class EpState {
 public:
  EpState(WeakClassificationDataset<Scalar> data, KernelParams<Scalar> kp, EpSites<Scalar> sites,
          Matrix<Scalar> prior)
      : data_(std::move(data)), kernel_(kp), sites_(std::move(sites)), prior_(std::move(prior)) {
    refresh();
  }

  const WeakClassificationDataset<Scalar>& data() const { return data_; }
  const KernelParams<Scalar>& kernel() const { return kernel_; }
  const EpSites<Scalar>& sites() const { return sites_; }
  const Vector<Scalar>& mean() const { return mean_; }
  const Matrix<Scalar>& covariance() const { return covariance_; }

  bool converged = false;
  int sweeps_used = 0;
  int clamped_sites = 0;       // negative site precisions forced to zero
  int collapsed_cavities = 0;  // site updates skipped for nonpositive cavity variance

  /// Latent predictive (mu*, sigma*^2) at x; variance clamped at zero.
  GaussianMoments<Scalar> predict_latent(const Vector<Scalar>& x) const {
    const Scalar prior = kernel_.amplitude * kernel_.amplitude;
    if (data_.empty()) return {Scalar(0), prior};
    if (x.size() != data_.xs.cols()) {
      throw DimensionMismatch("EpState::predict_latent: input dimension differs");
    }
    const Vector<Scalar> k = kernel_column(data_.xs, x, kernel_);
    const Vector<Scalar> v = factor_.solve_lower((sqrt_precision_.array() * k.array()).matrix());
    return {k.dot(weights_), std::max(Scalar(0), prior - v.squaredNorm())};
  }

  /// Batched predict_latent over the rows of xs.
  std::pair<Vector<Scalar>, Vector<Scalar>> predict_latent_batch(const Matrix<Scalar>& xs) const {
    const Scalar prior = kernel_.amplitude * kernel_.amplitude;
    if (data_.empty()) {
      return {Vector<Scalar>::Zero(xs.rows()), Vector<Scalar>::Constant(xs.rows(), prior)};
    }
    const Matrix<Scalar> k = cross_kernel(data_.xs, xs, kernel_);
    Vector<Scalar> means = k.transpose() * weights_;
    const Matrix<Scalar> v =
        lower_.template triangularView<Eigen::Lower>().solve(sqrt_precision_.asDiagonal() * k);
    Vector<Scalar> vars = (prior - v.colwise().squaredNorm().array()).max(Scalar(0)).matrix();
    return {std::move(means), std::move(vars)};
  }

  /// P(weak label = +1) at keep probability omega.
  Scalar predict_prob(const Vector<Scalar>& x, Scalar omega) const {
    check_keep_probability(omega);
    const auto latent = predict_latent(x);
    return (Scalar(2) * omega - Scalar(1)) *
               std_normal_cdf(latent.mean / std::sqrt(Scalar(1) + latent.variance)) +
           (Scalar(1) - omega);
  }

 private:
  void refresh() {
    auto post = detail::posterior_from_sites(prior_, sites_.precision, sites_.shift);
    sqrt_precision_ = std::move(post.sqrt_precision);
    factor_ = std::move(post.factor);
    lower_ = std::move(post.lower);
    covariance_ = std::move(post.covariance);
    mean_ = std::move(post.mean);
    if (data_.size() > 0) {
      const Vector<Scalar> kv = prior_ * sites_.shift;
      const Vector<Scalar> inner = factor_.solve((sqrt_precision_.array() * kv.array()).matrix());
      weights_ = sites_.shift - (sqrt_precision_.array() * inner.array()).matrix();
    }
  }

  WeakClassificationDataset<Scalar> data_;
  KernelParams<Scalar> kernel_;
  EpSites<Scalar> sites_;
  Matrix<Scalar> prior_;
  Vector<Scalar> sqrt_precision_;
  CholeskyFactor<Scalar> factor_;
  Matrix<Scalar> lower_;
  Vector<Scalar> weights_;
  Vector<Scalar> mean_;
  Matrix<Scalar> covariance_;
};

/// Sequential EP with weak-label tilted moments. Sites are visited in
/// ascending index order; the posterior gets a rank-one update after every
/// site and a full recompute from the prior at the end of each sweep.
/// `warm_start` may carry sites for a prefix of the data (e.g. the previous
/// round of an active-learning loop); the remaining sites start at zero.
template <typename Scalar>
EpState<Scalar> ep_fit(const WeakClassificationDataset<Scalar>& data,
                       const KernelParams<Scalar>& kp, const EpOptions& options = {},
                       const EpSites<Scalar>* warm_start = nullptr) {
  data.validate();
  kp.validate();
  if (data.empty()) throw InvalidArgument("ep_fit: empty dataset");
  const Eigen::Index n = data.size();
  const Matrix<Scalar> prior = kernel_matrix(data.xs, kp);

  EpSites<Scalar> sites{Vector<Scalar>::Zero(n), Vector<Scalar>::Zero(n)};
  if (warm_start != nullptr) {
    const Eigen::Index m = std::min(n, warm_start->precision.size());
    sites.precision.head(m) = warm_start->precision.head(m);
    sites.shift.head(m) = warm_start->shift.head(m);
  }
  auto post = detail::posterior_from_sites(prior, sites.precision, sites.shift);
  Matrix<Scalar> sigma = std::move(post.covariance);
  Vector<Scalar> mu = std::move(post.mean);

  bool converged = false;
  int sweeps = 0;
  int clamped = 0;
  int collapsed = 0;
  while (!converged && sweeps < options.max_sweeps) {
    ++sweeps;
    Scalar max_change = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar tau_cav = Scalar(1) / sigma(i, i) - sites.precision(i);
      const Scalar nu_cav = mu(i) / sigma(i, i) - sites.shift(i);
      if (!(tau_cav > Scalar(0))) {
        ++collapsed;
        continue;
      }
      const Scalar var_cav = Scalar(1) / tau_cav;
      const auto moments = weak_moments(data.omegas(i), data.labels(i), nu_cav * var_cav, var_cav);
      Scalar new_precision = Scalar(1) / moments.variance - tau_cav;
      if (new_precision < Scalar(0)) {
        new_precision = 0;
        ++clamped;
      }
      const Scalar new_shift = moments.mean / moments.variance - nu_cav;
      const Scalar d_precision = new_precision - sites.precision(i);
      max_change = std::max({max_change, std::abs(d_precision),
                             std::abs(new_shift - sites.shift(i))});
      sites.precision(i) = new_precision;
      sites.shift(i) = new_shift;

      const Vector<Scalar> s = sigma.col(i);
      sigma.noalias() -= (d_precision / (Scalar(1) + d_precision * s(i))) * s * s.transpose();
      mu.noalias() = sigma * sites.shift;
    }
    post = detail::posterior_from_sites(prior, sites.precision, sites.shift);
    sigma = std::move(post.covariance);
    mu = std::move(post.mean);
    converged = max_change <= Scalar(options.tolerance);
  }

  EpState<Scalar> state(data, kp, std::move(sites), prior);
  state.converged = converged;
  state.sweeps_used = sweeps;
  state.clamped_sites = clamped;
  state.collapsed_cavities = collapsed;
  return state;
}

}  // namespace weakal
