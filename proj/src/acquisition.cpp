#include "weakal/acquisition.hpp"

#include <numeric>

namespace weakal {

PrecisionGrid PrecisionGrid::regression(double gamma, int n_levels) {
  if (!(gamma > 0.0)) throw InvalidArgument("PrecisionGrid: gamma must be positive");
  if (n_levels < 1) throw InvalidArgument("PrecisionGrid: need at least one level");
  PrecisionGrid grid{TaskKind::regression, {}};
  if (n_levels == 1) {
    grid.levels.push_back(0.0);
    return grid;
  }
  for (int k = 0; k < n_levels; ++k) {
    grid.levels.push_back(k == n_levels - 1 ? gamma : gamma * k / (n_levels - 1));
  }
  return grid;
}

PrecisionGrid PrecisionGrid::classification(double kappa, double gamma, int n_levels) {
  if (n_levels < 1) throw InvalidArgument("PrecisionGrid: need at least one level");
  PrecisionGrid grid{TaskKind::classification, {}};
  for (int k = 0; k < n_levels; ++k) {
    const double alpha = n_levels == 1 ? 1.0 : static_cast<double>(k) / (n_levels - 1);
    if (kappa + gamma * alpha > 0.5) grid.levels.push_back(alpha);
  }
  if (grid.levels.empty()) {
    throw InvalidArgument("PrecisionGrid: every level has keep probability <= 0.5");
  }
  return grid;
}

std::size_t PrecisionGrid::highest_precision_index() const {
  return task == TaskKind::regression ? 0 : levels.size() - 1;
}

std::size_t PrecisionGrid::lowest_precision_index() const {
  return task == TaskKind::regression ? levels.size() - 1 : 0;
}

std::vector<std::size_t> PrecisionGrid::precision_order() const {
  std::vector<std::size_t> order(levels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (task == TaskKind::classification) std::reverse(order.begin(), order.end());
  return order;
}

PrecisionGrid PrecisionGrid::only_highest() const {
  return {task, {levels.at(highest_precision_index())}};
}

PrecisionGrid PrecisionGrid::without_level(double level) const {
  PrecisionGrid out{task, {}};
  for (double l : levels) {
    if (l != level) out.levels.push_back(l);
  }
  return out;
}

void PrecisionGrid::validate() const {
  if (levels.empty()) throw InvalidArgument("PrecisionGrid: no levels");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (!(levels[i] > levels[i - 1])) {
      throw InvalidArgument("PrecisionGrid: levels must be strictly increasing");
    }
  }
  if (task == TaskKind::classification && (levels.front() < 0.0 || levels.back() > 1.0)) {
    throw InvalidArgument("PrecisionGrid: classification levels must lie in [0, 1]");
  }
  if (task == TaskKind::regression && levels.front() < 0.0) {
    throw InvalidArgument("PrecisionGrid: regression levels must be nonnegative");
  }
}

double cost(const CostModel& model, double precision) {
  double value = 0.0;
  switch (model.kind) {
    case CostKind::power:
      value = std::pow(1.0 + model.c * precision / model.gamma, -model.q);
      break;
    case CostKind::linear:
      value = model.b + model.c * precision;
      break;
  }
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw InvalidArgument("cost: model yields a nonpositive cost");
  }
  return value;
}

Eigen::VectorXd grid_costs(const CostModel& model, const PrecisionGrid& grid) {
  Eigen::VectorXd costs(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t j = 0; j < grid.size(); ++j) {
    costs(static_cast<Eigen::Index>(j)) = cost(model, grid.levels[j]);
  }
  return costs;
}

std::optional<Selection> select(const Eigen::MatrixXd& mi, const Eigen::VectorXd& costs,
                                const PrecisionGrid& grid, double remaining_budget) {
  if (mi.cols() != costs.size() || costs.size() != static_cast<Eigen::Index>(grid.size())) {
    throw DimensionMismatch("select: score table, costs and grid disagree");
  }
  std::optional<Selection> best;
  for (std::size_t level : grid.precision_order()) {
    const auto j = static_cast<Eigen::Index>(level);
    const double c = costs(j);
    if (!(c <= remaining_budget)) continue;
    for (Eigen::Index i = 0; i < mi.rows(); ++i) {
      const double score = mi(i, j) / c;
      if (std::isnan(score)) continue;
      if (!best || score > best->score) {
        best = Selection{static_cast<std::size_t>(i), level, grid.levels[level], score, mi(i, j), c};
      }
    }
  }
  return best;
}

}  // namespace weakal
