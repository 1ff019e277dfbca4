#pragma once

#include <Eigen/Core>

namespace weakal {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct GaussianMoments {
  Scalar mean;
  Scalar variance;
};

}  // namespace weakal
