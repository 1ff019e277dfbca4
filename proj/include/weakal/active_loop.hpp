#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "weakal/acquisition.hpp"
#include "weakal/data.hpp"
#include "weakal/gp_classification.hpp"
#include "weakal/gp_regression.hpp"
#include "weakal/rng.hpp"

namespace weakal {

enum class Strategy {
  random,
  bald,
  mi_weak_model,
  mi_weak_target_b,
  mi_weak_target_c,
  mi_weak_target_cls,
};

std::string to_string(Strategy s);
std::optional<Strategy> parse_strategy(const std::string& name);
bool strategy_supports(Strategy s, TaskKind task);

enum class Metric { mse, accuracy };

std::string to_string(Metric m);
std::optional<Metric> parse_metric(const std::string& name);

struct LoopConfig {
  TaskKind task = TaskKind::regression;
  Strategy strategy = Strategy::mi_weak_model;
  double budget = 50.0;
  std::size_t initial_size = 10;
  bool charge_initial = false;
  PrecisionGrid grid = PrecisionGrid::regression(kSineGamma);
  CostModel cost;
  // mi_weak_target_b normally skips beta = 0, where its score is infinite.
  // Enabling this scores that level as +inf, so the pick ignores the input.
  bool target_b_max_precision = false;
  KernelParams<double> kernel{1.0, 1.0};
  double jitter = 1e-8;

  // regression
  RegressionOracleSpec oracle;
  bool learn_hyperparams = false;
  AdamConfig adam;
  bool standardize = false;  // inputs from training statistics, targets centred

  // classification
  FlipNoiseModel<double> flip;
  EpOptions ep;

  Metric metric = Metric::mse;

  void validate() const;
};

/// Noise model the regressor uses for a given oracle: the sine floor
/// sigma^2(x) for the sine oracles, a constant floor for CSV data.
NoiseModel<double> regression_noise(const RegressionOracleSpec& spec);

struct IterationRecord {
  std::size_t iteration = 0;
  double cumulative_cost = 0.0;
  std::size_t n_train = 0;
  std::int64_t pool_index = -1;  // -1 on the initial record
  double precision = 0.0;        // beta (regression) or alpha (classification)
  double score = 0.0;            // mi / cost of the selection; nan when not scored
  double metric = 0.0;
};

enum class TerminalReason { budget_exhausted, pool_empty };

std::string to_string(TerminalReason r);

struct TrajectoryLog {
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::random;
  std::vector<IterationRecord> records;
  TerminalReason reason = TerminalReason::budget_exhausted;
};

/// n distinct pool indices by partial Fisher-Yates, in draw order.
std::vector<std::size_t> initial_sample(std::size_t pool_size, std::size_t n, RngStream& rng);

double mean_squared_error(const Eigen::VectorXd& predicted, const Eigen::VectorXd& targets);

/// Fraction of labels matched by sign(p - 0.5), with p = 0.5 counted as +1.
double accuracy(const Eigen::VectorXd& prob_positive, const Eigen::VectorXd& labels);

double evaluate(const FittedRegressor<double>& model, const Eigen::MatrixXd& test_x,
                const Eigen::VectorXd& test_y);
double evaluate(const EpState<double>& model, const Eigen::MatrixXd& test_x,
                const Eigen::VectorXd& test_y);

/// Budgeted acquisition loop. The run stream is RngStream(derive_seed(seed, 2)).
/// Draw order: initial sample, then per iteration the random pick (random
/// strategy only) followed by the oracle draw.
TrajectoryLog run(const LoopConfig& config, const PoolTestSplit& split, std::uint64_t seed);

/// Header plus one row per record; columns
/// seed,strategy,iteration,cumulative_cost,n_train,pool_index,precision,score,metric.
std::string trajectory_csv(const TrajectoryLog& log);
void write_trajectory_csv(const TrajectoryLog& log, const std::string& path);
TrajectoryLog read_trajectory_csv(const std::string& path);

}  // namespace weakal
