#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "weakal/errors.hpp"
#include "weakal/math.hpp"

namespace weakal {

// ---------------------------------------------------------------------------
// Regression scores, in nats. var_latent is the latent predictive variance
// sigma*^2, var_noise the input-dependent floor sigma^2(x), beta = gamma/alpha.
// ---------------------------------------------------------------------------

/// MI(Y; f) for the clean target.
template <typename Scalar>
Scalar bald_regression(Scalar var_latent, Scalar var_noise) {
  if (!(var_noise > Scalar(0))) throw InvalidArgument("bald_regression: var_noise must be positive");
  return Scalar(0.5) * std::log1p(var_latent / var_noise);
}

/// MI(Y~; f): information a weak annotation at beta carries about the model.
template <typename Scalar>
Scalar mi_weak_model_regression(Scalar var_latent, Scalar var_noise, Scalar beta) {
  const Scalar observation = var_noise + beta;
  if (!(observation > Scalar(0))) {
    throw InvalidArgument("mi_weak_model_regression: var_noise + beta must be positive");
  }
  return Scalar(0.5) * std::log1p(var_latent / observation);
}

/// MI(Y~; Y) when Y~ depends on the model only through Y (Y~ | Y ~ N(Y, beta)).
/// Infinite at beta = 0, so beta must be strictly positive.
template <typename Scalar>
Scalar mi_weak_target_regression_b(Scalar var_latent, Scalar var_noise, Scalar beta) {
  if (!(beta > Scalar(0))) {
    throw InvalidArgument("mi_weak_target_regression_b: beta must be positive (MI is infinite at 0)");
  }
  return Scalar(0.5) * std::log((var_latent + var_noise + beta) / beta);
}

/// MI(Y~; Y) when Y and Y~ are independent noisy readings of f(x).
template <typename Scalar>
Scalar mi_weak_target_regression_c(Scalar var_latent, Scalar var_noise, Scalar beta) {
  const Scalar clean = var_latent + var_noise;
  if (!(clean > Scalar(0))) {
    throw InvalidArgument("mi_weak_target_regression_c: var_latent + var_noise must be positive");
  }
  const Scalar marginal = clean + beta;
  const Scalar conditional = marginal - var_latent * var_latent / clean;
  return Scalar(0.5) * std::log(marginal / conditional);
}

// ---------------------------------------------------------------------------
// Classification scores, in bits. (mu, var) are the moments of the Gaussian
// posterior over the latent f at x; omega is the keep probability.
// ---------------------------------------------------------------------------

namespace detail {

/// Taylor-approximated E_f[h((2w-1) Phi(f) + 1 - w)] - h(w) under N(mu, var):
/// (1 - h(w)) / sqrt(1 + 2 c var) exp(-c mu^2 / (1 + 2 c var)),
/// c = (2w - 1)^2 / (pi ln2 (1 - h(w))).
template <typename Scalar>
Scalar expected_excess_entropy(Scalar mu, Scalar var, Scalar strength, Scalar h_omega) {
  const Scalar headroom = Scalar(1) - h_omega;
  const Scalar c =
      strength * strength / (std::numbers::pi_v<Scalar> * std::numbers::ln2_v<Scalar> * headroom);
  const Scalar spread = Scalar(1) + Scalar(2) * c * var;
  return headroom / std::sqrt(spread) * std::exp(-c * mu * mu / spread);
}

template <typename Scalar>
Scalar weak_label_marginal(Scalar mu, Scalar var, Scalar omega) {
  const Scalar p = (Scalar(2) * omega - Scalar(1)) * std_normal_cdf(mu / std::sqrt(Scalar(1) + var)) +
                   (Scalar(1) - omega);
  return std::clamp(p, Scalar(0), Scalar(1));
}

template <typename Scalar>
Scalar mi_weak_model_classification_raw(Scalar mu, Scalar var, Scalar omega) {
  if (!(omega > Scalar(0.5) && omega <= Scalar(1))) {
    throw InvalidArgument("keep probability must lie in (0.5, 1]");
  }
  const Scalar h_omega = binary_entropy(omega);
  return binary_entropy(weak_label_marginal(mu, var, omega)) -
         expected_excess_entropy(mu, var, Scalar(2) * omega - Scalar(1), h_omega) - h_omega;
}

template <typename Scalar>
Scalar bald_classification_raw(Scalar mu, Scalar var) {
  // The clean-label Taylor form C/sqrt(var + C^2) exp(-mu^2 / (2(var + C^2))),
  // C^2 = pi ln2 / 2, rewritten as the omega = 1 case of expected_excess_entropy.
  // Both are the same function; sharing the arithmetic makes the weak-label
  // score at omega = 1 reproduce this one bit for bit.
  return binary_entropy(std_normal_cdf(mu / std::sqrt(var + Scalar(1)))) -
         expected_excess_entropy(mu, var, Scalar(1), Scalar(0));
}

template <typename Scalar>
Scalar mi_weak_target_classification_raw(Scalar mu, Scalar var, Scalar omega) {
  if (!(omega > Scalar(0.5) && omega <= Scalar(1))) {
    throw InvalidArgument("keep probability must lie in (0.5, 1]");
  }
  return binary_entropy(weak_label_marginal(mu, var, omega)) - binary_entropy(omega);
}

}  // namespace detail

/// BALD for the probit classifier; Taylor-approximation undershoot clamped to 0.
template <typename Scalar>
Scalar bald_classification(Scalar mu, Scalar var) {
  return std::max(Scalar(0), detail::bald_classification_raw(mu, var));
}

/// MI(Y~; f) for a label kept with probability omega.
template <typename Scalar>
Scalar mi_weak_model_classification(Scalar mu, Scalar var, Scalar omega) {
  return std::max(Scalar(0), detail::mi_weak_model_classification_raw(mu, var, omega));
}

/// MI(Y~; Y) for a label kept with probability omega.
template <typename Scalar>
Scalar mi_weak_target_classification(Scalar mu, Scalar var, Scalar omega) {
  return std::max(Scalar(0), detail::mi_weak_target_classification_raw(mu, var, omega));
}

// ---------------------------------------------------------------------------
// Precision grids, costs and the selector.
// ---------------------------------------------------------------------------

enum class TaskKind { regression, classification };

/// Discretized precision levels. Regression levels are beta values in
/// [0, gamma] (beta = 0 is the highest precision); classification levels are
/// alpha values in [0, 1] (alpha = 1 is the highest precision).
struct PrecisionGrid {
  TaskKind task = TaskKind::regression;
  std::vector<double> levels;

  /// beta in {0, gamma/(n-1), ..., gamma}.
  static PrecisionGrid regression(double gamma, int n_levels = 11);

  /// alpha in {0, 1/(n-1), ..., 1}, dropping levels whose keep probability
  /// kappa + gamma * alpha is not above 0.5.
  static PrecisionGrid classification(double kappa, double gamma, int n_levels = 11);

  std::size_t size() const { return levels.size(); }

  std::size_t highest_precision_index() const;
  std::size_t lowest_precision_index() const;

  /// Level indices from highest to lowest precision.
  std::vector<std::size_t> precision_order() const;

  PrecisionGrid only_highest() const;
  PrecisionGrid without_level(double level) const;

  void validate() const;
};

enum class CostKind { power, linear };

/// power:  C = (1 + c / alpha)^-q, evaluated as (1 + c beta / gamma)^-q.
/// linear: C = b + c alpha.
struct CostModel {
  CostKind kind = CostKind::power;
  double c = 9.0;
  double q = 1.0;
  double b = 0.1;
  double gamma = 1.0;  // converts beta back to alpha for the power form
};

double cost(const CostModel& model, double precision);

Eigen::VectorXd grid_costs(const CostModel& model, const PrecisionGrid& grid);

struct Selection {
  std::size_t pool_index = 0;
  std::size_t level_index = 0;
  double precision = 0.0;
  double score = 0.0;
  double mi = 0.0;
  double cost = 0.0;
};

/// argmax of mi / cost over (pool row, grid level) among entries whose cost
/// fits in remaining_budget. Ties go to the higher precision, then to the lower
/// row. Returns nullopt when nothing is affordable. NaN scores are skipped.
std::optional<Selection> select(const Eigen::MatrixXd& mi, const Eigen::VectorXd& costs,
                                const PrecisionGrid& grid, double remaining_budget);

}  // namespace weakal
