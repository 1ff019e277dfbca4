#include "weakal/data.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include "weakal/csv.hpp"
#include "weakal/errors.hpp"

namespace weakal {

namespace {

std::size_t pool_count(std::size_t n, double pool_fraction) {
  if (!(pool_fraction > 0.0 && pool_fraction < 1.0)) {
    throw InvalidArgument("pool fraction must lie in (0, 1)");
  }
  return static_cast<std::size_t>(std::llround(pool_fraction * static_cast<double>(n)));
}

void check_beta(double beta, double gamma) {
  if (!(beta >= 0.0 && beta <= gamma)) {
    throw InvalidArgument("annotate: beta must lie in [0, gamma]");
  }
}

}  // namespace

double sine_mean(double x, double frequency) { return 0.2 * x * std::sin(frequency * x); }

double sine_base_variance(double x) {
  const double r = x / kSineDomain;
  return 0.01 * (1.0 + r * r);
}

PoolTestSplit gen_sine_split(std::size_t n, double frequency, bool skewed, RngStream& rng,
                             double pool_fraction) {
  if (n < 10) throw InvalidArgument("gen_sine_split: need at least 10 points");
  if (!(frequency > 0.0)) throw InvalidArgument("gen_sine_split: frequency must be positive");
  const std::size_t n_pool = pool_count(n, pool_fraction);
  const std::size_t n_test = n - n_pool;
  const double half = 0.5 * kSineDomain;

  PoolTestSplit split;
  split.pool_x.resize(static_cast<Eigen::Index>(n_pool), 1);
  split.pool_y.resize(static_cast<Eigen::Index>(n_pool));
  for (Eigen::Index i = 0; i < split.pool_y.size(); ++i) {
    double x = 0.0;
    if (skewed) {
      x = rng.uniform() < 0.9 ? rng.uniform(0.0, half) : rng.uniform(half, kSineDomain);
    } else {
      x = rng.uniform(0.0, kSineDomain);
    }
    split.pool_x(i, 0) = x;
    split.pool_y(i) = rng.normal(sine_mean(x, frequency), sine_base_variance(x));
  }
  split.test_x.resize(static_cast<Eigen::Index>(n_test), 1);
  split.test_y.resize(static_cast<Eigen::Index>(n_test));
  for (Eigen::Index i = 0; i < split.test_y.size(); ++i) {
    const double x = rng.uniform(0.0, kSineDomain);
    split.test_x(i, 0) = x;
    split.test_y(i) = rng.normal(sine_mean(x, frequency), sine_base_variance(x));
  }
  return split;
}

RegressionOracle::RegressionOracle(RegressionOracleSpec spec, const PoolTestSplit& split)
    : spec_(spec), pool_y_(split.pool_y) {
  if (!(spec_.gamma > 0.0)) throw InvalidArgument("RegressionOracle: gamma must be positive");
  if (spec_.kind == RegressionOracleKind::sine_direct) {
    if (split.pool_x.cols() != 1) {
      throw DimensionMismatch("RegressionOracle: sine oracle needs one-dimensional inputs");
    }
    pool_x_ = split.pool_x.col(0);
  }
}

double RegressionOracle::annotate(std::size_t pool_index, double beta, RngStream& rng) const {
  check_beta(beta, spec_.gamma);
  if (pool_index >= static_cast<std::size_t>(pool_y_.size())) {
    throw UnknownPoint("RegressionOracle: index " + std::to_string(pool_index) +
                       " is not in the pool");
  }
  const auto i = static_cast<Eigen::Index>(pool_index);
  if (spec_.kind == RegressionOracleKind::sine_direct) {
    return annotate_sine_direct(pool_x_(i), spec_.frequency, beta, rng);
  }
  return pool_y_(i) + std::sqrt(beta) * rng.normal();
}

double annotate_sine_direct(double x, double frequency, double beta, RngStream& rng) {
  if (!(beta >= 0.0)) throw InvalidArgument("annotate: beta must be nonnegative");
  return rng.normal(sine_mean(x, frequency), sine_base_variance(x) + beta);
}

PoolTestSplit load_csv_regression(const std::string& path, const std::string& target_column,
                                  RngStream& rng, double pool_fraction) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);

  std::string line;
  std::size_t row = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++row;
    if (!csv::trim(line).empty()) {
      header = csv::split_line(line);
      break;
    }
  }
  if (header.empty()) throw EmptyFile(path + ": no header");
  if (header.size() < 2) throw ParseError(row, 1, "need at least two columns");

  std::size_t target = header.size() - 1;
  if (!target_column.empty()) {
    std::size_t found = header.size();
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (csv::trim(header[j]) == target_column) found = j;
    }
    if (found == header.size()) {
      throw ParseError(row, 0, "no column named '" + target_column + "'");
    }
    target = found;
  }

  std::vector<std::vector<double>> features;
  std::vector<double> targets;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto fields = csv::split_line(line);
    if (fields.size() != header.size()) {
      throw ParseError(row, fields.size(),
                       "expected " + std::to_string(header.size()) + " fields");
    }
    std::vector<double> x;
    x.reserve(header.size() - 1);
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const auto value = csv::parse_double(fields[j]);
      if (!value || !std::isfinite(*value)) {
        throw ParseError(row, j + 1, "not a finite number: '" + fields[j] + "'");
      }
      if (j == target) {
        targets.push_back(*value);
      } else {
        x.push_back(*value);
      }
    }
    features.push_back(std::move(x));
  }
  if (targets.empty()) throw EmptyFile(path + ": no data rows");

  // Fisher-Yates, one uniform_index draw per position from the back.
  std::vector<std::size_t> order(targets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }

  const std::size_t n_pool = pool_count(targets.size(), pool_fraction);
  const auto d = static_cast<Eigen::Index>(header.size() - 1);
  PoolTestSplit split;
  split.pool_x.resize(static_cast<Eigen::Index>(n_pool), d);
  split.pool_y.resize(static_cast<Eigen::Index>(n_pool));
  split.test_x.resize(static_cast<Eigen::Index>(targets.size() - n_pool), d);
  split.test_y.resize(static_cast<Eigen::Index>(targets.size() - n_pool));
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& x = features[order[k]];
    const bool in_pool = k < n_pool;
    auto& xs = in_pool ? split.pool_x : split.test_x;
    auto& ys = in_pool ? split.pool_y : split.test_y;
    const auto r = static_cast<Eigen::Index>(in_pool ? k : k - n_pool);
    for (Eigen::Index j = 0; j < d; ++j) xs(r, j) = x[static_cast<std::size_t>(j)];
    ys(r) = targets[order[k]];
  }
  return split;
}

void write_split_csv(const PoolTestSplit& split, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  const Eigen::Index d = split.pool_x.cols() > 0 ? split.pool_x.cols() : split.test_x.cols();
  out << "role";
  for (Eigen::Index j = 0; j < d; ++j) out << ",x" << j;
  out << ",target\n";
  auto rows = [&](const char* role, const Eigen::MatrixXd& xs, const Eigen::VectorXd& ys) {
    for (Eigen::Index i = 0; i < ys.size(); ++i) {
      out << role;
      for (Eigen::Index j = 0; j < d; ++j) out << ',' << csv::format_double(xs(i, j));
      out << ',' << csv::format_double(ys(i)) << '\n';
    }
  };
  rows("pool", split.pool_x, split.pool_y);
  rows("test", split.test_x, split.test_y);
}

PoolTestSplit read_split_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw EmptyFile(path + ": no header");
  const auto header = csv::split_line(line);
  if (header.size() < 3 || header.front() != "role" || header.back() != "target") {
    throw ParseError(1, 1, "expected header role,x0,...,target");
  }
  const std::size_t d = header.size() - 2;
  std::vector<double> pool_x, pool_y, test_x, test_y;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto fields = csv::split_line(line);
    if (fields.size() != header.size()) throw ParseError(row, fields.size(), "wrong field count");
    const bool pool = fields[0] == "pool";
    if (!pool && fields[0] != "test") throw ParseError(row, 1, "role must be pool or test");
    for (std::size_t j = 1; j < fields.size(); ++j) {
      const auto value = csv::parse_double(fields[j]);
      if (!value) throw ParseError(row, j + 1, "not a number");
      if (j + 1 == fields.size()) {
        (pool ? pool_y : test_y).push_back(*value);
      } else {
        (pool ? pool_x : test_x).push_back(*value);
      }
    }
  }
  auto to_matrix = [d](const std::vector<double>& flat) {
    const auto n = static_cast<Eigen::Index>(flat.size() / d);
    Eigen::MatrixXd m(n, static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        m(i, j) = flat[static_cast<std::size_t>(i) * d + static_cast<std::size_t>(j)];
      }
    }
    return m;
  };
  PoolTestSplit split;
  split.pool_x = to_matrix(pool_x);
  split.pool_y = Eigen::Map<const Eigen::VectorXd>(pool_y.data(), static_cast<Eigen::Index>(pool_y.size()));
  split.test_x = to_matrix(test_x);
  split.test_y = Eigen::Map<const Eigen::VectorXd>(test_y.data(), static_cast<Eigen::Index>(test_y.size()));
  return split;
}

double toy_label(int version, double x1, double x2, RngStream& rng) {
  switch (version) {
    case 1:
      if (std::abs(x1) <= kNoiseBlockHalfWidth) return rng.uniform() < 0.5 ? 1.0 : -1.0;
      return x1 >= 0.0 ? 1.0 : -1.0;
    case 2:
      return x1 >= 0.0 ? 1.0 : -1.0;
    case 3: {
      const auto cells = static_cast<long long>(std::floor(x1 / kCheckerboardCell)) +
                         static_cast<long long>(std::floor(x2 / kCheckerboardCell));
      return cells % 2 == 0 ? 1.0 : -1.0;
    }
    default:
      throw InvalidArgument("toy_label: version must be 1, 2 or 3");
  }
}

PoolTestSplit gen_classification_split(const ClassificationDatasetSpec& spec, RngStream& rng) {
  if (spec.version < 1 || spec.version > 3) {
    throw InvalidArgument("classification dataset version must be 1, 2 or 3");
  }
  if (spec.n < 10) throw InvalidArgument("classification dataset needs at least 10 points");
  spec.noise.validate();
  const std::size_t n_pool = pool_count(spec.n, spec.pool_fraction);

  PoolTestSplit split;
  split.pool_x.resize(static_cast<Eigen::Index>(n_pool), 2);
  split.pool_y.resize(static_cast<Eigen::Index>(n_pool));
  split.test_x.resize(static_cast<Eigen::Index>(spec.n - n_pool), 2);
  split.test_y.resize(static_cast<Eigen::Index>(spec.n - n_pool));
  for (std::size_t k = 0; k < spec.n; ++k) {
    double x1 = 0.0;
    if (spec.version == 2 && rng.uniform() < 0.5) {
      x1 = rng.uniform(kUninformativeBlockStart, 2.0);
    } else {
      x1 = rng.uniform(-2.0, 2.0);
    }
    const double x2 = rng.uniform(-2.0, 2.0);
    const double label = toy_label(spec.version, x1, x2, rng);
    const bool in_pool = k < n_pool;
    const auto r = static_cast<Eigen::Index>(in_pool ? k : k - n_pool);
    auto& xs = in_pool ? split.pool_x : split.test_x;
    xs(r, 0) = x1;
    xs(r, 1) = x2;
    (in_pool ? split.pool_y : split.test_y)(r) = label;
  }
  return split;
}

double annotate_classification(double true_label, double omega, RngStream& rng) {
  check_keep_probability(omega);
  return rng.uniform() < omega ? true_label : -true_label;
}

}  // namespace weakal
