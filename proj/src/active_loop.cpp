#include "weakal/active_loop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "weakal/csv.hpp"
#include "weakal/errors.hpp"

namespace weakal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct StrategyName {
  Strategy strategy;
  const char* name;
};

constexpr StrategyName kStrategyNames[] = {
    {Strategy::random, "random"},
    {Strategy::bald, "bald"},
    {Strategy::mi_weak_model, "mi_weak_model"},
    {Strategy::mi_weak_target_b, "mi_weak_target_b"},
    {Strategy::mi_weak_target_c, "mi_weak_target_c"},
    {Strategy::mi_weak_target_cls, "mi_weak_target_cls"},
};

// Largest value r <= budget - spent with spent + r <= budget in floating point,
// so charging any cost <= r can never push the total over the budget.
double remaining_budget(double budget, double spent) {
  double remaining = budget - spent;
  while (remaining > 0.0 && spent + remaining > budget) {
    remaining = std::nextafter(remaining, -std::numeric_limits<double>::infinity());
  }
  return remaining;
}

// Grid the strategy scores over. bald and random only ever annotate at the
// highest precision; the Y~-Y score under the additive model is infinite at
// beta = 0, so that level is dropped.
PrecisionGrid strategy_grid(const LoopConfig& config) {
  switch (config.strategy) {
    case Strategy::random:
    case Strategy::bald:
      return config.grid.only_highest();
    case Strategy::mi_weak_target_b: {
      if (config.target_b_max_precision) return config.grid;
      auto grid = config.grid.without_level(0.0);
      if (grid.levels.empty()) {
        throw InvalidArgument("mi_weak_target_b needs a grid level with beta > 0");
      }
      return grid;
    }
    default:
      return config.grid;
  }
}

std::vector<std::size_t> remaining_pool(std::size_t pool_size,
                                        const std::vector<std::size_t>& taken) {
  std::vector<bool> used(pool_size, false);
  for (std::size_t i : taken) used[i] = true;
  std::vector<std::size_t> active;
  active.reserve(pool_size - taken.size());
  for (std::size_t i = 0; i < pool_size; ++i) {
    if (!used[i]) active.push_back(i);
  }
  return active;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& xs, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), xs.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = xs.row(static_cast<Eigen::Index>(rows[k]));
  }
  return out;
}

Eigen::VectorXd class_probabilities(const Eigen::VectorXd& means, const Eigen::VectorXd& vars) {
  Eigen::VectorXd p(means.size());
  for (Eigen::Index i = 0; i < means.size(); ++i) {
    p(i) = std_normal_cdf(means(i) / std::sqrt(1.0 + vars(i)));
  }
  return p;
}

// Shared loop skeleton. A Model provides
//   double metric();
//   Eigen::MatrixXd scores(const std::vector<std::size_t>& active, const PrecisionGrid& grid);
//   void annotate_and_append(std::size_t pool_index, double precision, RngStream& rng);
template <typename Model>
TrajectoryLog drive(const LoopConfig& config, std::uint64_t seed, std::size_t pool_size,
                    Model& model, RngStream& rng, const std::vector<std::size_t>& initial) {
  TrajectoryLog log;
  log.seed = seed;
  log.strategy = config.strategy;

  const PrecisionGrid grid = strategy_grid(config);
  const Eigen::VectorXd costs = grid_costs(config.cost, grid);
  const double top_level = config.grid.levels[config.grid.highest_precision_index()];

  double spent = 0.0;
  if (config.charge_initial) {
    spent = static_cast<double>(initial.size()) * cost(config.cost, top_level);
    if (spent > config.budget) {
      throw InvalidArgument("initial annotations alone exceed the budget");
    }
  }
  std::vector<std::size_t> active = remaining_pool(pool_size, initial);

  std::size_t n_train = initial.size();
  log.records.push_back({0, spent, n_train, -1, top_level, kNaN, model.metric()});

  for (std::size_t iteration = 1;; ++iteration) {
    if (active.empty()) {
      log.reason = TerminalReason::pool_empty;
      break;
    }
    const double remaining = remaining_budget(config.budget, spent);
    try {
      std::optional<Selection> sel;
      if (config.strategy == Strategy::random) {
        if (costs(0) <= remaining) {
          const auto row = static_cast<std::size_t>(rng.uniform_index(active.size()));
          sel = Selection{row, 0, grid.levels[0], kNaN, kNaN, costs(0)};
        }
      } else {
        sel = select(model.scores(active, grid), costs, grid, remaining);
      }
      if (!sel) {
        log.reason = TerminalReason::budget_exhausted;
        break;
      }
      const std::size_t pool_index = active[sel->pool_index];
      active.erase(active.begin() + static_cast<std::ptrdiff_t>(sel->pool_index));
      model.annotate_and_append(pool_index, sel->precision, rng);
      spent += sel->cost;
      ++n_train;
      log.records.push_back({iteration, spent, n_train, static_cast<std::int64_t>(pool_index),
                             sel->precision, sel->score, model.metric()});
    } catch (const Error& e) {
      throw Error("iteration " + std::to_string(iteration) + ": " + e.what());
    }
  }
  return log;
}

// Fixed hyperparameters on raw inputs: the posterior over the whole pool is
// grown incrementally.
class IncrementalRegressionModel {
 public:
  IncrementalRegressionModel(const LoopConfig& config, const PoolTestSplit& split)
      : config_(config),
        split_(split),
        noise_(regression_noise(config.oracle)),
        oracle_(config.oracle, split),
        gp_(config.kernel, noise_, split.pool_x, split.test_x, config.jitter,
            static_cast<Eigen::Index>(config.initial_size) + 64) {
    pool_noise_.resize(split.pool_x.rows());
    for (Eigen::Index i = 0; i < split.pool_x.rows(); ++i) {
      pool_noise_(i) = noise_.base_variance(split.pool_x.row(i).transpose());
    }
  }

  double metric() const { return mean_squared_error(gp_.probe_means(), split_.test_y); }

  Eigen::MatrixXd scores(const std::vector<std::size_t>& active, const PrecisionGrid& grid) const {
    Eigen::VectorXd var(static_cast<Eigen::Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) {
      var(static_cast<Eigen::Index>(k)) = gp_.candidate_variance(static_cast<Eigen::Index>(active[k]));
    }
    return regression_scores(config_.strategy, active, var, pool_noise_, grid);
  }

  void annotate_and_append(std::size_t pool_index, double beta, RngStream& rng) {
    const double y = oracle_.annotate(pool_index, beta, rng);
    gp_.append(split_.pool_x.row(static_cast<Eigen::Index>(pool_index)).transpose(), y, beta);
  }

  static Eigen::MatrixXd regression_scores(Strategy strategy, const std::vector<std::size_t>& active,
                                           const Eigen::VectorXd& var,
                                           const Eigen::VectorXd& pool_noise,
                                           const PrecisionGrid& grid) {
    Eigen::MatrixXd mi(var.size(), static_cast<Eigen::Index>(grid.size()));
    for (Eigen::Index k = 0; k < var.size(); ++k) {
      const double v = var(k);
      const double s = pool_noise(static_cast<Eigen::Index>(active[static_cast<std::size_t>(k)]));
      for (std::size_t j = 0; j < grid.size(); ++j) {
        const double beta = grid.levels[j];
        double value = 0.0;
        switch (strategy) {
          case Strategy::bald:
            value = bald_regression(v, s);
            break;
          case Strategy::mi_weak_model:
            value = mi_weak_model_regression(v, s, beta);
            break;
          case Strategy::mi_weak_target_b:
            value = beta > 0.0 ? mi_weak_target_regression_b(v, s, beta)
                               : std::numeric_limits<double>::infinity();
            break;
          case Strategy::mi_weak_target_c:
            value = mi_weak_target_regression_c(v, s, beta);
            break;
          default:
            throw InvalidArgument("strategy " + to_string(strategy) + " does not score regression");
        }
        mi(k, static_cast<Eigen::Index>(j)) = value;
      }
    }
    return mi;
  }

  void seed_point(std::size_t pool_index, double beta, RngStream& rng) {
    annotate_and_append(pool_index, beta, rng);
  }

 private:
  const LoopConfig& config_;
  const PoolTestSplit& split_;
  NoiseModel<double> noise_;
  RegressionOracle oracle_;
  IncrementalRegressor<double> gp_;
  Eigen::VectorXd pool_noise_;
};

// Refit from scratch every iteration: inputs standardized by the current
// training statistics, annotations centred, hyperparameters optionally
// relearned (warm-started from the previous round).
class RebuiltRegressionModel {
 public:
  RebuiltRegressionModel(const LoopConfig& config, const PoolTestSplit& split)
      : config_(config),
        split_(split),
        noise_(regression_noise(config.oracle)),
        oracle_(config.oracle, split),
        kernel_(config.kernel) {
    pool_noise_.resize(split.pool_x.rows());
    for (Eigen::Index i = 0; i < split.pool_x.rows(); ++i) {
      pool_noise_(i) = noise_.base_variance(split.pool_x.row(i).transpose());
    }
  }

  double metric() const { return metric_; }

  Eigen::MatrixXd scores(const std::vector<std::size_t>& active, const PrecisionGrid& grid) const {
    const Eigen::MatrixXd candidates = transform(gather_rows(split_.pool_x, active));
    const Eigen::MatrixXd k = cross_kernel(model_->data().xs, candidates, kernel_);
    const Eigen::MatrixXd lower = model_->factor().lower();
    const Eigen::MatrixXd v = lower.triangularView<Eigen::Lower>().solve(k);
    const double prior = kernel_.amplitude * kernel_.amplitude;
    const Eigen::VectorXd var = (prior - v.colwise().squaredNorm().array()).max(0.0).matrix();
    return IncrementalRegressionModel::regression_scores(config_.strategy, active, var,
                                                         pool_noise_, grid);
  }

  void annotate_and_append(std::size_t pool_index, double beta, RngStream& rng) {
    seed_point(pool_index, beta, rng);
    refit();
  }

  void seed_point(std::size_t pool_index, double beta, RngStream& rng) {
    const double y = oracle_.annotate(pool_index, beta, rng);
    raw_.append(split_.pool_x.row(static_cast<Eigen::Index>(pool_index)).transpose(), y, beta);
  }

  void refit() {
    const Eigen::Index d = raw_.xs.cols();
    shift_ = Eigen::RowVectorXd::Zero(d);
    scale_ = Eigen::RowVectorXd::Ones(d);
    y_mean_ = 0.0;
    if (config_.standardize) {
      shift_ = raw_.xs.colwise().mean();
      const Eigen::MatrixXd centred = raw_.xs.rowwise() - shift_;
      const auto n = static_cast<double>(raw_.size());
      for (Eigen::Index j = 0; j < d; ++j) {
        const double sd = std::sqrt(centred.col(j).squaredNorm() / n);
        scale_(j) = sd > 0.0 ? sd : 1.0;
      }
      y_mean_ = raw_.ys.mean();
    }

    WeakRegressionDataset<double> data;
    data.xs = transform(raw_.xs);
    data.ys = raw_.ys.array() - y_mean_;
    data.betas = raw_.betas;
    // The noise floor is defined on raw inputs.
    auto raw_floor = [base = noise_.base_variance, shift = shift_, scale = scale_](
                         const Eigen::VectorXd& z) {
      const Eigen::RowVectorXd x = z.transpose().cwiseProduct(scale) + shift;
      return base(x.transpose());
    };
    NoiseModel<double> noise{raw_floor, noise_.gamma};
    if (config_.learn_hyperparams) {
      kernel_ = fit_hyperparams(data, kernel_, noise, config_.adam, config_.jitter).params;
    }
    model_.emplace(std::move(data), kernel_, std::move(noise), config_.jitter);

    const Eigen::MatrixXd tx = transform(split_.test_x);
    const Eigen::MatrixXd kt = cross_kernel(model_->data().xs, tx, kernel_);
    const Eigen::VectorXd means = (kt.transpose() * model_->weights()).array() + y_mean_;
    metric_ = mean_squared_error(means, split_.test_y);
  }

 private:
  Eigen::MatrixXd transform(const Eigen::MatrixXd& xs) const {
    return ((xs.rowwise() - shift_).array().rowwise() / scale_.array()).matrix();
  }

  const LoopConfig& config_;
  const PoolTestSplit& split_;
  NoiseModel<double> noise_;
  RegressionOracle oracle_;
  KernelParams<double> kernel_;
  Eigen::VectorXd pool_noise_;
  WeakRegressionDataset<double> raw_;
  Eigen::RowVectorXd shift_;
  Eigen::RowVectorXd scale_;
  double y_mean_ = 0.0;
  std::optional<FittedRegressor<double>> model_;
  double metric_ = 0.0;
};

class ClassificationModel {
 public:
  ClassificationModel(const LoopConfig& config, const PoolTestSplit& split)
      : config_(config), split_(split) {}

  double metric() const { return metric_; }

  Eigen::MatrixXd scores(const std::vector<std::size_t>& active, const PrecisionGrid& grid) const {
    const auto [mu, var] = state_->predict_latent_batch(gather_rows(split_.pool_x, active));
    Eigen::MatrixXd mi(mu.size(), static_cast<Eigen::Index>(grid.size()));
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double omega = config_.flip.omega(grid.levels[j]);
      for (Eigen::Index k = 0; k < mu.size(); ++k) {
        double value = 0.0;
        switch (config_.strategy) {
          case Strategy::bald:
            value = bald_classification(mu(k), var(k));
            break;
          case Strategy::mi_weak_model:
            value = mi_weak_model_classification(mu(k), var(k), omega);
            break;
          case Strategy::mi_weak_target_cls:
            value = mi_weak_target_classification(mu(k), var(k), omega);
            break;
          default:
            throw InvalidArgument("strategy " + to_string(config_.strategy) +
                                  " does not score classification");
        }
        mi(k, static_cast<Eigen::Index>(j)) = value;
      }
    }
    return mi;
  }

  void seed_point(std::size_t pool_index, double alpha, RngStream& rng) {
    const double omega = config_.flip.omega(alpha);
    const auto i = static_cast<Eigen::Index>(pool_index);
    const double label = annotate_classification(split_.pool_y(i), omega, rng);
    data_.append(split_.pool_x.row(i).transpose(), label, omega);
  }

  void annotate_and_append(std::size_t pool_index, double alpha, RngStream& rng) {
    seed_point(pool_index, alpha, rng);
    refit();
  }

  void refit() {
    const EpSites<double>* warm = state_ ? &state_->sites() : nullptr;
    state_.emplace(ep_fit(data_, config_.kernel, config_.ep, warm));
    metric_ = evaluate(*state_, split_.test_x, split_.test_y);
  }

 private:
  const LoopConfig& config_;
  const PoolTestSplit& split_;
  WeakClassificationDataset<double> data_;
  std::optional<EpState<double>> state_;
  double metric_ = 0.0;
};

}  // namespace

std::string to_string(Strategy s) {
  for (const auto& entry : kStrategyNames) {
    if (entry.strategy == s) return entry.name;
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(const std::string& name) {
  for (const auto& entry : kStrategyNames) {
    if (name == entry.name) return entry.strategy;
  }
  return std::nullopt;
}

bool strategy_supports(Strategy s, TaskKind task) {
  switch (s) {
    case Strategy::random:
    case Strategy::bald:
    case Strategy::mi_weak_model:
      return true;
    case Strategy::mi_weak_target_b:
    case Strategy::mi_weak_target_c:
      return task == TaskKind::regression;
    case Strategy::mi_weak_target_cls:
      return task == TaskKind::classification;
  }
  return false;
}

std::string to_string(Metric m) { return m == Metric::mse ? "mse" : "accuracy"; }

std::optional<Metric> parse_metric(const std::string& name) {
  if (name == "mse") return Metric::mse;
  if (name == "accuracy") return Metric::accuracy;
  return std::nullopt;
}

std::string to_string(TerminalReason r) {
  return r == TerminalReason::budget_exhausted ? "budget_exhausted" : "pool_empty";
}

void LoopConfig::validate() const {
  if (!(budget > 0.0) || !std::isfinite(budget)) throw InvalidArgument("budget must be positive");
  if (initial_size < 1) throw InvalidArgument("initial size must be at least 1");
  if (!strategy_supports(strategy, task)) {
    throw InvalidArgument("strategy " + to_string(strategy) + " does not apply to this task");
  }
  if (grid.task != task) throw InvalidArgument("precision grid is for the other task");
  grid.validate();
  kernel.validate();
  if (!(jitter >= 0.0)) throw InvalidArgument("jitter must be nonnegative");
  if (task == TaskKind::regression) {
    if (metric != Metric::mse) throw InvalidArgument("regression is evaluated by mse");
    if (!(oracle.gamma > 0.0)) throw InvalidArgument("gamma must be positive");
    if (grid.levels.back() > oracle.gamma) {
      throw InvalidArgument("regression grid exceeds gamma");
    }
  } else {
    if (metric != Metric::accuracy) throw InvalidArgument("classification is evaluated by accuracy");
    if (learn_hyperparams || standardize) {
      throw InvalidArgument("hyperparameter learning and standardization are regression-only");
    }
    flip.validate();
    for (double alpha : grid.levels) check_keep_probability(flip.omega(alpha));
  }
}

NoiseModel<double> regression_noise(const RegressionOracleSpec& spec) {
  if (spec.kind == RegressionOracleKind::csv_from_y) {
    return NoiseModel<double>::constant(kCsvNoiseFloor, spec.gamma);
  }
  return {[](const Eigen::VectorXd& x) { return sine_base_variance(x(0)); }, spec.gamma};
}

std::vector<std::size_t> initial_sample(std::size_t pool_size, std::size_t n, RngStream& rng) {
  if (n > pool_size) {
    throw PoolTooSmall("pool has " + std::to_string(pool_size) + " points, need " +
                       std::to_string(n));
  }
  std::vector<std::size_t> order(pool_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(pool_size - i));
    std::swap(order[i], order[j]);
  }
  order.resize(n);
  return order;
}

double mean_squared_error(const Eigen::VectorXd& predicted, const Eigen::VectorXd& targets) {
  if (targets.size() == 0) throw EmptyTestSet("no test points");
  if (predicted.size() != targets.size()) {
    throw DimensionMismatch("mean_squared_error: lengths differ");
  }
  return (predicted - targets).squaredNorm() / static_cast<double>(targets.size());
}

double accuracy(const Eigen::VectorXd& prob_positive, const Eigen::VectorXd& labels) {
  if (labels.size() == 0) throw EmptyTestSet("no test points");
  if (prob_positive.size() != labels.size()) throw DimensionMismatch("accuracy: lengths differ");
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const double predicted = prob_positive(i) - 0.5 >= 0.0 ? 1.0 : -1.0;
    if (predicted == labels(i)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double evaluate(const FittedRegressor<double>& model, const Eigen::MatrixXd& test_x,
                const Eigen::VectorXd& test_y) {
  if (test_y.size() == 0) throw EmptyTestSet("no test points");
  Eigen::VectorXd means(test_y.size());
  for (Eigen::Index i = 0; i < test_y.size(); ++i) {
    means(i) = model.predict_latent(test_x.row(i).transpose()).mean;
  }
  return mean_squared_error(means, test_y);
}

double evaluate(const EpState<double>& model, const Eigen::MatrixXd& test_x,
                const Eigen::VectorXd& test_y) {
  if (test_y.size() == 0) throw EmptyTestSet("no test points");
  const auto [means, vars] = model.predict_latent_batch(test_x);
  return accuracy(class_probabilities(means, vars), test_y);
}

TrajectoryLog run(const LoopConfig& config, const PoolTestSplit& split, std::uint64_t seed) {
  config.validate();
  if (split.test_size() == 0) throw EmptyTestSet("split has no test points");
  RngStream rng(derive_seed(seed, 2));
  const std::size_t pool_size = split.pool_size();
  const auto initial = initial_sample(pool_size, config.initial_size, rng);
  const double top_level = config.grid.levels[config.grid.highest_precision_index()];

  auto start = [&](auto& model) {
    for (std::size_t p : initial) model.seed_point(p, top_level, rng);
  };

  if (config.task == TaskKind::classification) {
    ClassificationModel model(config, split);
    start(model);
    model.refit();
    return drive(config, seed, pool_size, model, rng, initial);
  }
  if (config.standardize || config.learn_hyperparams) {
    RebuiltRegressionModel model(config, split);
    start(model);
    model.refit();
    return drive(config, seed, pool_size, model, rng, initial);
  }
  IncrementalRegressionModel model(config, split);
  start(model);
  return drive(config, seed, pool_size, model, rng, initial);
}

std::string trajectory_csv(const TrajectoryLog& log) {
  std::ostringstream out;
  out << "seed,strategy,iteration,cumulative_cost,n_train,pool_index,precision,score,metric\n";
  const std::string strategy = to_string(log.strategy);
  for (const auto& r : log.records) {
    out << log.seed << ',' << strategy << ',' << r.iteration << ','
        << csv::format_double(r.cumulative_cost) << ',' << r.n_train << ',' << r.pool_index << ','
        << csv::format_double(r.precision) << ',' << csv::format_double(r.score) << ','
        << csv::format_double(r.metric) << '\n';
  }
  return out.str();
}

void write_trajectory_csv(const TrajectoryLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << trajectory_csv(log);
  if (!out) throw Error("write failed: " + path);
}

TrajectoryLog read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw EmptyFile(path + ": no header");
  TrajectoryLog log;
  std::size_t row = 1;
  auto number = [&](const std::string& field, std::size_t column) {
    const auto value = csv::parse_double(field);
    if (!value) throw ParseError(row, column, "not a number: '" + field + "'");
    return *value;
  };
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split_line(line);
    if (f.size() != 9) throw ParseError(row, f.size(), "expected 9 fields");
    const auto strategy = parse_strategy(f[1]);
    if (!strategy) throw ParseError(row, 2, "unknown strategy '" + f[1] + "'");
    try {
      log.seed = std::stoull(f[0]);
    } catch (const std::exception&) {
      throw ParseError(row, 1, "bad seed '" + f[0] + "'");
    }
    log.strategy = *strategy;
    IterationRecord r;
    r.iteration = static_cast<std::size_t>(number(f[2], 3));
    r.cumulative_cost = number(f[3], 4);
    r.n_train = static_cast<std::size_t>(number(f[4], 5));
    r.pool_index = static_cast<std::int64_t>(number(f[5], 6));
    r.precision = number(f[6], 7);
    r.score = number(f[7], 8);
    r.metric = number(f[8], 9);
    log.records.push_back(r);
  }
  if (log.records.empty()) throw EmptyFile(path + ": no records");
  return log;
}

}  // namespace weakal
