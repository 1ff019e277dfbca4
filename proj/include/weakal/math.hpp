#pragma once

#include <cmath>
#include <numbers>

#include "weakal/errors.hpp"

namespace weakal {

/// Standard normal cdf. Uses erfc so the lower tail keeps full relative
/// accuracy instead of cancelling against 1.
template <typename Scalar>
Scalar std_normal_cdf(Scalar x) {
  return Scalar(0.5) * std::erfc(-x * std::numbers::sqrt2_v<Scalar> / Scalar(2));
}

template <typename Scalar>
Scalar std_normal_pdf(Scalar x) {
  // 1/sqrt(2 pi) = inv_sqrtpi / sqrt2
  constexpr Scalar inv_sqrt_2pi =
      std::numbers::inv_sqrtpi_v<Scalar> / std::numbers::sqrt2_v<Scalar>;
  return inv_sqrt_2pi * std::exp(Scalar(-0.5) * x * x);
}

/// Shannon entropy of a Bernoulli(p) variable, in bits. h(0) = h(1) = 0.
template <typename Scalar>
Scalar binary_entropy(Scalar p) {
  if (!(p >= Scalar(0) && p <= Scalar(1))) {
    throw InvalidArgument("binary_entropy: probability outside [0, 1]");
  }
  // Fold onto [0, 0.5] so that h(p) and h(1 - p) run the same arithmetic.
  const Scalar a = p <= Scalar(0.5) ? p : Scalar(1) - p;
  if (a == Scalar(0)) return Scalar(0);
  const Scalar b = Scalar(1) - a;
  return -(a * std::log2(a) + b * std::log2(b));
}

/// Differential entropy of a univariate Gaussian with the given variance, in nats.
template <typename Scalar>
Scalar gaussian_entropy(Scalar variance) {
  if (!(variance > Scalar(0))) {
    throw InvalidArgument("gaussian_entropy: variance must be positive");
  }
  return Scalar(0.5) *
         (Scalar(1) + std::log(Scalar(2) * std::numbers::pi_v<Scalar>) + std::log(variance));
}

}  // namespace weakal
