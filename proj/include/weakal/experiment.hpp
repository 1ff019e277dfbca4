#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "weakal/active_loop.hpp"
#include "weakal/data.hpp"

namespace weakal {

enum class DatasetKind { sine, csv, classification };

std::string to_string(DatasetKind k);

/// Everything needed to reproduce one experiment. Defaults that depend on the
/// dataset kind (gamma, costs, budget, initial size) are filled in by
/// parse_config once the kind is known.
struct ExperimentConfig {
  // [dataset]
  DatasetKind dataset = DatasetKind::sine;
  std::size_t n = 8000;
  double frequency = 3.0;
  bool skewed = false;
  RegressionOracleKind oracle = RegressionOracleKind::sine_direct;
  std::string csv_path;
  std::string target_column;
  int version = 1;
  double pool_fraction = 0.75;

  // [model]
  double amplitude = 1.0;
  double length_scale = 1.0;
  double jitter = 1e-8;
  bool learn_hyperparams = false;
  bool standardize = false;
  int ep_max_sweeps = 50;
  double ep_tolerance = 1e-4;

  // [acquisition]
  std::vector<Strategy> strategies{Strategy::mi_weak_model, Strategy::bald, Strategy::random};
  int grid_levels = 11;
  double gamma = kSineGamma;
  double kappa = 0.8;
  std::size_t initial_size = 10;
  double budget = 50.0;
  bool charge_initial = false;
  bool target_b_max_precision = false;

  // [costs]
  CostKind cost_kind = CostKind::power;
  double cost_c = 9.0;
  double cost_q = 1.0;
  double cost_b = 0.1;

  // [run]
  std::size_t repeats = 15;
  std::uint64_t seed_base = 0;
  std::string output_dir = "out";
  std::size_t workers = 1;
  std::size_t aggregate_grid = 100;

  TaskKind task() const {
    return dataset == DatasetKind::classification ? TaskKind::classification
                                                  : TaskKind::regression;
  }
};

/// `key = value` lines under [dataset], [model], [acquisition], [costs] and
/// [run] headers; `#` starts a comment. Relative file paths are resolved
/// against `base_dir`.
ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig parse_config(const std::string& path);

/// Every field, in canonical order; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

LoopConfig make_loop_config(const ExperimentConfig& cfg, Strategy strategy);

/// Split for one repeat, drawn from RngStream(derive_seed(seed, 1)).
PoolTestSplit make_split(const ExperimentConfig& cfg, std::uint64_t seed);

struct QuartileCurve {
  Strategy strategy = Strategy::random;
  std::vector<double> cost;
  std::vector<double> q1;
  std::vector<double> median;
  std::vector<double> q3;
};

/// Inclusive-method quantile of unsorted values: linear interpolation between
/// order statistics at position p (n - 1).
double quantile_inclusive(std::vector<double> values, double p);

/// Linear interpolation of the (cumulative_cost, metric) path at `cost`.
double interpolate_metric(const TrajectoryLog& log, double cost);

/// One curve per strategy, sorted by strategy name, each on `grid_points`
/// evenly spaced costs over the range every run of that strategy covers.
std::vector<QuartileCurve> aggregate(const std::vector<TrajectoryLog>& logs,
                                     std::size_t grid_points = 100);

std::string quartile_csv(const QuartileCurve& curve);

struct ExperimentResult {
  std::vector<TrajectoryLog> logs;  // strategy-major, then seed
  std::vector<QuartileCurve> curves;
};

/// Runs repeats x strategies in up to `workers` threads and writes
///   <out>/trajectories/<strategy>_seed<seed>.csv
///   <out>/aggregates/<strategy>.csv
///   <out>/summary.csv
/// On failure an INCOMPLETE marker is left in <out> and the first error is rethrown.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                std::size_t workers);

/// Reads <dir>/trajectories/*.csv and rewrites <dir>/aggregates.
std::vector<QuartileCurve> aggregate_directory(const std::string& dir, std::size_t grid_points);

}  // namespace weakal
