#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Core>

#include "weakal/gp_classification.hpp"
#include "weakal/rng.hpp"

namespace weakal {

/// Pool inputs with their clean targets, and a test set with clean targets.
/// For classification the targets are the true labels in {-1, +1}. Test
/// targets never pass through a weak annotation channel.
struct PoolTestSplit {
  Eigen::MatrixXd pool_x;
  Eigen::VectorXd pool_y;
  Eigen::MatrixXd test_x;
  Eigen::VectorXd test_y;

  std::size_t pool_size() const { return static_cast<std::size_t>(pool_y.size()); }
  std::size_t test_size() const { return static_cast<std::size_t>(test_y.size()); }
};

// --- sine curve ---------------------------------------------------------

inline constexpr double kSineDomain = 5.0;
inline constexpr double kSineGamma = 0.09;

/// 0.2 x sin(frequency x)
double sine_mean(double x, double frequency);

/// 0.01 (1 + (x / 5)^2), the variance of a maximum-precision annotation.
double sine_base_variance(double x);

/// Pool and test inputs on [0, 5). With `skewed`, each pool input lands in
/// [0, 2.5) with probability 0.9; test inputs are always uniform. Targets are
/// drawn at maximum precision. Draw order: pool points (x, then y) followed
/// by test points (x, then y).
PoolTestSplit gen_sine_split(std::size_t n, double frequency, bool skewed, RngStream& rng,
                             double pool_fraction = 0.75);

// --- regression oracles -------------------------------------------------

enum class RegressionOracleKind {
  sine_direct,  // y~ ~ N(f(x), sigma^2(x) + beta), fresh each call
  sine_from_y,  // y~ ~ N(Y, beta), Y the pool point's cached clean target
  csv_from_y,   // same channel over targets read from a file
};

inline constexpr double kCsvGamma = 1.0;
inline constexpr double kCsvNoiseFloor = 1e-3;

struct RegressionOracleSpec {
  RegressionOracleKind kind = RegressionOracleKind::sine_direct;
  double frequency = 3.0;
  double gamma = kSineGamma;
};

/// Draws one weak annotation at inverse precision beta. Every call consumes
/// exactly one normal variate from `rng`.
class RegressionOracle {
 public:
  RegressionOracle(RegressionOracleSpec spec, const PoolTestSplit& split);

  double annotate(std::size_t pool_index, double beta, RngStream& rng) const;

  const RegressionOracleSpec& spec() const { return spec_; }

 private:
  RegressionOracleSpec spec_;
  Eigen::VectorXd pool_x_;
  Eigen::VectorXd pool_y_;
};

double annotate_sine_direct(double x, double frequency, double beta, RngStream& rng);

// --- CSV ----------------------------------------------------------------

/// Reads a headered, comma-separated numeric table. `target_column` names the
/// target; an empty name selects the last column. Rows are shuffled with
/// `rng` and split into pool and test.
PoolTestSplit load_csv_regression(const std::string& path, const std::string& target_column,
                                  RngStream& rng, double pool_fraction = 0.8);

/// Split dump: header `role,x0,...,x{d-1},target`, one row per point.
void write_split_csv(const PoolTestSplit& split, const std::string& path);
PoolTestSplit read_split_csv(const std::string& path);

// --- toy classification -------------------------------------------------

/// Version 1: boundary at x1 = 0 with random labels where |x1| <= 0.25.
/// Version 2: boundary at x1 = 0; half of all points sit in x1 in [1.5, 2].
/// Version 3: unit checkerboard, +1 where floor(x1) + floor(x2) is even.
struct ClassificationDatasetSpec {
  int version = 1;
  std::size_t n = 8000;
  FlipNoiseModel<double> noise;
  double pool_fraction = 0.75;
};

inline constexpr double kNoiseBlockHalfWidth = 0.25;
inline constexpr double kUninformativeBlockStart = 1.5;
inline constexpr double kCheckerboardCell = 1.0;

/// True label at (x1, x2). Draws from `rng` only inside the version 1 noise block.
double toy_label(int version, double x1, double x2, RngStream& rng);

PoolTestSplit gen_classification_split(const ClassificationDatasetSpec& spec, RngStream& rng);

/// Keeps `true_label` with probability omega, flips it otherwise. One uniform draw.
double annotate_classification(double true_label, double omega, RngStream& rng);

}  // namespace weakal
