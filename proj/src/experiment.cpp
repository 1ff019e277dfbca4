#include "weakal/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "weakal/csv.hpp"
#include "weakal/errors.hpp"

namespace fs = std::filesystem;

namespace weakal {

namespace {

struct Entry {
  std::string section;
  std::string key;
  std::string value;
  std::size_t line = 0;
};

const char* const kSections[] = {"dataset", "model", "acquisition", "costs", "run"};

std::string oracle_name(RegressionOracleKind k) {
  switch (k) {
    case RegressionOracleKind::sine_direct:
      return "sine_direct";
    case RegressionOracleKind::sine_from_y:
      return "sine_from_y";
    case RegressionOracleKind::csv_from_y:
      return "csv_from_y";
  }
  return "unknown";
}

std::vector<Entry> tokenize(const std::string& text) {
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string t = csv::trim(raw);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("[", line, "unterminated section header");
      section = csv::trim(std::string_view(t).substr(1, t.size() - 2));
      if (std::find(std::begin(kSections), std::end(kSections), section) == std::end(kSections)) {
        throw ConfigError(section, line, "unknown section");
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(t, line, "expected key = value");
    Entry e{section, csv::trim(std::string_view(t).substr(0, eq)),
            csv::trim(std::string_view(t).substr(eq + 1)), line};
    if (section.empty()) throw ConfigError(e.key, line, "key outside any section");
    if (e.key.empty()) throw ConfigError("", line, "empty key");
    for (const auto& prior : entries) {
      if (prior.section == e.section && prior.key == e.key) {
        throw ConfigError(e.key, line, "duplicate key (first set on line " +
                                           std::to_string(prior.line) + ")");
      }
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

double to_real(const Entry& e) {
  const auto v = csv::parse_double(e.value);
  if (!v || !std::isfinite(*v)) throw ConfigError(e.key, e.line, "expected a finite number");
  return *v;
}

std::uint64_t to_count(const Entry& e) {
  const auto v = csv::parse_double(e.value);
  if (!v || *v < 0 || std::floor(*v) != *v || *v > 9.0e15) {
    throw ConfigError(e.key, e.line, "expected a nonnegative integer");
  }
  return static_cast<std::uint64_t>(*v);
}

bool to_bool(const Entry& e) {
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  throw ConfigError(e.key, e.line, "expected true or false");
}

void apply_kind_defaults(ExperimentConfig& cfg) {
  switch (cfg.dataset) {
    case DatasetKind::sine:
      cfg.gamma = kSineGamma;
      cfg.pool_fraction = 0.75;
      break;
    case DatasetKind::csv:
      cfg.oracle = RegressionOracleKind::csv_from_y;
      cfg.gamma = kCsvGamma;
      cfg.pool_fraction = 0.8;
      cfg.standardize = true;
      cfg.budget = 100.0;
      break;
    case DatasetKind::classification:
      cfg.gamma = 0.2;
      cfg.kappa = 0.8;
      cfg.pool_fraction = 0.75;
      cfg.initial_size = 5;
      cfg.budget = 30.0;
      cfg.cost_kind = CostKind::linear;
      cfg.cost_c = 0.9;
      cfg.cost_b = 0.1;
      cfg.strategies = {Strategy::mi_weak_model, Strategy::mi_weak_target_cls, Strategy::bald,
                        Strategy::random};
      break;
  }
}

}  // namespace

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::sine:
      return "sine";
    case DatasetKind::csv:
      return "csv";
    case DatasetKind::classification:
      return "classification";
  }
  return "unknown";
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir) {
  const auto entries = tokenize(text);
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> lines;

  for (const auto& e : entries) {
    if (e.section == "dataset" && e.key == "kind") {
      if (e.value == "sine") {
        cfg.dataset = DatasetKind::sine;
      } else if (e.value == "csv") {
        cfg.dataset = DatasetKind::csv;
      } else if (e.value == "classification") {
        cfg.dataset = DatasetKind::classification;
      } else {
        throw ConfigError("kind", e.line, "must be sine, csv or classification");
      }
    }
  }
  apply_kind_defaults(cfg);
  bool length_scale_set = false;

  using Setter = std::function<void(const Entry&)>;
  const std::map<std::string, Setter> setters = {
      {"dataset.kind", [](const Entry&) {}},
      {"dataset.n", [&](const Entry& e) { cfg.n = to_count(e); }},
      {"dataset.frequency", [&](const Entry& e) { cfg.frequency = to_real(e); }},
      {"dataset.skewed", [&](const Entry& e) { cfg.skewed = to_bool(e); }},
      {"dataset.oracle",
       [&](const Entry& e) {
         if (e.value == "sine_direct") {
           cfg.oracle = RegressionOracleKind::sine_direct;
         } else if (e.value == "sine_from_y") {
           cfg.oracle = RegressionOracleKind::sine_from_y;
         } else if (e.value == "csv_from_y") {
           cfg.oracle = RegressionOracleKind::csv_from_y;
         } else {
           throw ConfigError(e.key, e.line, "must be sine_direct, sine_from_y or csv_from_y");
         }
       }},
      {"dataset.path",
       [&](const Entry& e) {
         fs::path p(e.value);
         if (p.is_relative()) p = fs::path(base_dir) / p;
         cfg.csv_path = p.lexically_normal().string();
       }},
      {"dataset.target", [&](const Entry& e) { cfg.target_column = e.value; }},
      {"dataset.version", [&](const Entry& e) { cfg.version = static_cast<int>(to_count(e)); }},
      {"dataset.pool_fraction", [&](const Entry& e) { cfg.pool_fraction = to_real(e); }},
      {"model.amplitude", [&](const Entry& e) { cfg.amplitude = to_real(e); }},
      {"model.length_scale",
       [&](const Entry& e) {
         cfg.length_scale = to_real(e);
         length_scale_set = true;
       }},
      {"model.jitter", [&](const Entry& e) { cfg.jitter = to_real(e); }},
      {"model.learn_hyperparams", [&](const Entry& e) { cfg.learn_hyperparams = to_bool(e); }},
      {"model.standardize", [&](const Entry& e) { cfg.standardize = to_bool(e); }},
      {"model.ep_max_sweeps",
       [&](const Entry& e) { cfg.ep_max_sweeps = static_cast<int>(to_count(e)); }},
      {"model.ep_tolerance", [&](const Entry& e) { cfg.ep_tolerance = to_real(e); }},
      {"acquisition.strategies",
       [&](const Entry& e) {
         cfg.strategies.clear();
         for (const auto& field : csv::split_line(e.value)) {
           const auto name = csv::trim(field);
           const auto s = parse_strategy(name);
           if (!s) throw ConfigError(e.key, e.line, "unknown strategy '" + name + "'");
           if (std::find(cfg.strategies.begin(), cfg.strategies.end(), *s) !=
               cfg.strategies.end()) {
             throw ConfigError(e.key, e.line, "strategy '" + name + "' listed twice");
           }
           cfg.strategies.push_back(*s);
         }
       }},
      {"acquisition.grid_levels",
       [&](const Entry& e) { cfg.grid_levels = static_cast<int>(to_count(e)); }},
      {"acquisition.gamma", [&](const Entry& e) { cfg.gamma = to_real(e); }},
      {"acquisition.kappa", [&](const Entry& e) { cfg.kappa = to_real(e); }},
      {"acquisition.initial_size", [&](const Entry& e) { cfg.initial_size = to_count(e); }},
      {"acquisition.budget", [&](const Entry& e) { cfg.budget = to_real(e); }},
      {"acquisition.charge_initial", [&](const Entry& e) { cfg.charge_initial = to_bool(e); }},
      {"acquisition.target_b_max_precision",
       [&](const Entry& e) { cfg.target_b_max_precision = to_bool(e); }},
      {"costs.kind",
       [&](const Entry& e) {
         if (e.value == "power") {
           cfg.cost_kind = CostKind::power;
         } else if (e.value == "linear") {
           cfg.cost_kind = CostKind::linear;
         } else {
           throw ConfigError(e.key, e.line, "must be power or linear");
         }
       }},
      {"costs.c", [&](const Entry& e) { cfg.cost_c = to_real(e); }},
      {"costs.q", [&](const Entry& e) { cfg.cost_q = to_real(e); }},
      {"costs.b", [&](const Entry& e) { cfg.cost_b = to_real(e); }},
      {"run.repeats", [&](const Entry& e) { cfg.repeats = to_count(e); }},
      {"run.seed_base", [&](const Entry& e) { cfg.seed_base = to_count(e); }},
      {"run.output_dir", [&](const Entry& e) { cfg.output_dir = e.value; }},
      {"run.workers", [&](const Entry& e) { cfg.workers = to_count(e); }},
      {"run.aggregate_grid", [&](const Entry& e) { cfg.aggregate_grid = to_count(e); }},
  };

  for (const auto& e : entries) {
    const std::string full = e.section + "." + e.key;
    const auto it = setters.find(full);
    if (it == setters.end()) throw ConfigError(e.key, e.line, "unknown key in [" + e.section + "]");
    it->second(e);
    lines[full] = e.line;
  }
  if (cfg.dataset == DatasetKind::sine && !length_scale_set && cfg.frequency > 0.0) {
    cfg.length_scale = 3.0 / cfg.frequency;
  }

  auto fail = [&](const std::string& full, const std::string& reason) {
    const auto it = lines.find(full);
    throw ConfigError(full.substr(full.find('.') + 1), it == lines.end() ? 0 : it->second, reason);
  };
  const bool regression = cfg.task() == TaskKind::regression;

  if (cfg.n < 10) fail("dataset.n", "must be at least 10");
  if (!(cfg.frequency > 0.0)) fail("dataset.frequency", "must be positive");
  if (!(cfg.pool_fraction > 0.0 && cfg.pool_fraction < 1.0)) {
    fail("dataset.pool_fraction", "must lie in (0, 1)");
  }
  if (cfg.dataset == DatasetKind::csv) {
    if (cfg.oracle != RegressionOracleKind::csv_from_y) fail("dataset.oracle", "csv data uses csv_from_y");
    if (cfg.csv_path.empty()) fail("dataset.path", "required for csv data");
    if (!fs::is_regular_file(cfg.csv_path)) fail("dataset.path", "file not found: " + cfg.csv_path);
  } else if (cfg.dataset == DatasetKind::sine && cfg.oracle == RegressionOracleKind::csv_from_y) {
    fail("dataset.oracle", "sine data uses sine_direct or sine_from_y");
  }
  if (cfg.version < 1 || cfg.version > 3) fail("dataset.version", "must be 1, 2 or 3");
  if (!(cfg.amplitude > 0.0)) fail("model.amplitude", "must be positive");
  if (!(cfg.length_scale > 0.0)) fail("model.length_scale", "must be positive");
  if (!(cfg.jitter >= 0.0)) fail("model.jitter", "must be nonnegative");
  if (!regression && cfg.learn_hyperparams) fail("model.learn_hyperparams", "regression only");
  if (!regression && cfg.standardize) fail("model.standardize", "regression only");
  if (cfg.ep_max_sweeps < 1) fail("model.ep_max_sweeps", "must be at least 1");
  if (!(cfg.ep_tolerance > 0.0)) fail("model.ep_tolerance", "must be positive");
  if (cfg.strategies.empty()) fail("acquisition.strategies", "must list at least one strategy");
  for (Strategy s : cfg.strategies) {
    if (!strategy_supports(s, cfg.task())) {
      fail("acquisition.strategies", to_string(s) + " does not apply to " + to_string(cfg.dataset));
    }
  }
  if (cfg.grid_levels < 1) fail("acquisition.grid_levels", "must be at least 1");
  if (!(cfg.gamma > 0.0) && regression) fail("acquisition.gamma", "must be positive");
  if (!regression) {
    try {
      FlipNoiseModel<double>{cfg.kappa, cfg.gamma}.validate();
      PrecisionGrid::classification(cfg.kappa, cfg.gamma, cfg.grid_levels);
    } catch (const InvalidArgument& e) {
      fail("acquisition.kappa", e.what());
    }
  }
  if (cfg.initial_size < 1) fail("acquisition.initial_size", "must be at least 1");
  if (!(cfg.budget > 0.0)) fail("acquisition.budget", "must be positive");
  if (!(cfg.cost_c >= 0.0)) fail("costs.c", "must be nonnegative");
  if (!(cfg.cost_q >= 0.0)) fail("costs.q", "must be nonnegative");
  if (cfg.cost_kind == CostKind::linear && !(cfg.cost_b > 0.0)) fail("costs.b", "must be positive");
  if (cfg.repeats < 1) fail("run.repeats", "must be at least 1");
  if (cfg.workers < 1) fail("run.workers", "must be at least 1");
  if (cfg.aggregate_grid < 1) fail("run.aggregate_grid", "must be at least 1");
  if (cfg.output_dir.empty()) fail("run.output_dir", "must not be empty");
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", 0, "cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto dir = fs::path(path).parent_path();
  return parse_config_text(buffer.str(), dir.empty() ? "." : dir.string());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  using csv::format_double;
  auto flag = [](bool b) { return b ? "true" : "false"; };
  std::ostringstream out;
  out << "[dataset]\n"
      << "kind = " << to_string(cfg.dataset) << '\n'
      << "n = " << cfg.n << '\n'
      << "frequency = " << format_double(cfg.frequency) << '\n'
      << "skewed = " << flag(cfg.skewed) << '\n'
      << "oracle = " << oracle_name(cfg.oracle) << '\n';
  if (!cfg.csv_path.empty()) out << "path = " << cfg.csv_path << '\n';
  if (!cfg.target_column.empty()) out << "target = " << cfg.target_column << '\n';
  out << "version = " << cfg.version << '\n'
      << "pool_fraction = " << format_double(cfg.pool_fraction) << '\n'
      << "\n[model]\n"
      << "amplitude = " << format_double(cfg.amplitude) << '\n'
      << "length_scale = " << format_double(cfg.length_scale) << '\n'
      << "jitter = " << format_double(cfg.jitter) << '\n'
      << "learn_hyperparams = " << flag(cfg.learn_hyperparams) << '\n'
      << "standardize = " << flag(cfg.standardize) << '\n'
      << "ep_max_sweeps = " << cfg.ep_max_sweeps << '\n'
      << "ep_tolerance = " << format_double(cfg.ep_tolerance) << '\n'
      << "\n[acquisition]\n"
      << "strategies = ";
  for (std::size_t i = 0; i < cfg.strategies.size(); ++i) {
    out << (i ? ", " : "") << to_string(cfg.strategies[i]);
  }
  out << '\n'
      << "grid_levels = " << cfg.grid_levels << '\n'
      << "gamma = " << format_double(cfg.gamma) << '\n'
      << "kappa = " << format_double(cfg.kappa) << '\n'
      << "initial_size = " << cfg.initial_size << '\n'
      << "budget = " << format_double(cfg.budget) << '\n'
      << "charge_initial = " << flag(cfg.charge_initial) << '\n'
      << "target_b_max_precision = " << flag(cfg.target_b_max_precision) << '\n'
      << "\n[costs]\n"
      << "kind = " << (cfg.cost_kind == CostKind::power ? "power" : "linear") << '\n'
      << "c = " << format_double(cfg.cost_c) << '\n'
      << "q = " << format_double(cfg.cost_q) << '\n'
      << "b = " << format_double(cfg.cost_b) << '\n'
      << "\n[run]\n"
      << "repeats = " << cfg.repeats << '\n'
      << "seed_base = " << cfg.seed_base << '\n'
      << "output_dir = " << cfg.output_dir << '\n'
      << "workers = " << cfg.workers << '\n'
      << "aggregate_grid = " << cfg.aggregate_grid << '\n';
  return out.str();
}

LoopConfig make_loop_config(const ExperimentConfig& cfg, Strategy strategy) {
  LoopConfig lc;
  lc.task = cfg.task();
  lc.strategy = strategy;
  lc.budget = cfg.budget;
  lc.initial_size = cfg.initial_size;
  lc.charge_initial = cfg.charge_initial;
  lc.target_b_max_precision = cfg.target_b_max_precision;
  lc.kernel = {cfg.amplitude, cfg.length_scale};
  lc.jitter = cfg.jitter;
  lc.cost = {cfg.cost_kind, cfg.cost_c, cfg.cost_q, cfg.cost_b, cfg.gamma};
  if (lc.task == TaskKind::regression) {
    lc.grid = PrecisionGrid::regression(cfg.gamma, cfg.grid_levels);
    lc.oracle = {cfg.oracle, cfg.frequency, cfg.gamma};
    lc.learn_hyperparams = cfg.learn_hyperparams;
    lc.standardize = cfg.standardize;
    lc.metric = Metric::mse;
  } else {
    lc.grid = PrecisionGrid::classification(cfg.kappa, cfg.gamma, cfg.grid_levels);
    lc.flip = {cfg.kappa, cfg.gamma};
    lc.ep = {cfg.ep_max_sweeps, cfg.ep_tolerance};
    lc.metric = Metric::accuracy;
  }
  return lc;
}

PoolTestSplit make_split(const ExperimentConfig& cfg, std::uint64_t seed) {
  RngStream rng(derive_seed(seed, 1));
  switch (cfg.dataset) {
    case DatasetKind::sine:
      return gen_sine_split(cfg.n, cfg.frequency, cfg.skewed, rng, cfg.pool_fraction);
    case DatasetKind::csv:
      return load_csv_regression(cfg.csv_path, cfg.target_column, rng, cfg.pool_fraction);
    case DatasetKind::classification: {
      ClassificationDatasetSpec spec;
      spec.version = cfg.version;
      spec.n = cfg.n;
      spec.noise = {cfg.kappa, cfg.gamma};
      spec.pool_fraction = cfg.pool_fraction;
      return gen_classification_split(spec, rng);
    }
  }
  throw InvalidArgument("unknown dataset kind");
}

double quantile_inclusive(std::vector<double> values, double p) {
  if (values.empty()) throw EmptyInput("quantile of no values");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

double interpolate_metric(const TrajectoryLog& log, double cost) {
  const auto& r = log.records;
  if (r.empty()) throw EmptyInput("trajectory has no records");
  if (cost < r.front().cumulative_cost || cost > r.back().cumulative_cost) {
    throw InvalidArgument("interpolate_metric: cost outside the trajectory");
  }
  const auto it = std::lower_bound(r.begin(), r.end(), cost, [](const IterationRecord& rec, double c) {
    return rec.cumulative_cost < c;
  });
  if (it->cumulative_cost == cost) return it->metric;
  const auto& right = *it;
  const auto& left = *(it - 1);
  const double t = (cost - left.cumulative_cost) / (right.cumulative_cost - left.cumulative_cost);
  return left.metric + t * (right.metric - left.metric);
}

std::vector<QuartileCurve> aggregate(const std::vector<TrajectoryLog>& logs,
                                     std::size_t grid_points) {
  if (logs.empty()) throw EmptyInput("no trajectories to aggregate");
  if (grid_points < 1) throw InvalidArgument("aggregate: need at least one grid point");
  std::map<std::string, std::vector<const TrajectoryLog*>> groups;
  for (const auto& log : logs) {
    if (log.records.empty()) throw EmptyInput("trajectory has no records");
    groups[to_string(log.strategy)].push_back(&log);
  }

  std::vector<QuartileCurve> curves;
  for (const auto& [name, members] : groups) {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (const auto* log : members) {
      lo = std::max(lo, log->records.front().cumulative_cost);
      hi = std::min(hi, log->records.back().cumulative_cost);
    }
    if (lo > hi) throw DegenerateRange("runs of " + name + " share no cost range");

    QuartileCurve curve;
    curve.strategy = members.front()->strategy;
    const std::size_t points = lo == hi ? 1 : grid_points;
    for (std::size_t k = 0; k < points; ++k) {
      double c = lo;
      if (points > 1) {
        c = k + 1 == points ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
      }
      std::vector<double> values;
      values.reserve(members.size());
      for (const auto* log : members) values.push_back(interpolate_metric(*log, c));
      curve.cost.push_back(c);
      curve.q1.push_back(quantile_inclusive(values, 0.25));
      curve.median.push_back(quantile_inclusive(values, 0.5));
      curve.q3.push_back(quantile_inclusive(values, 0.75));
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

std::string quartile_csv(const QuartileCurve& curve) {
  std::ostringstream out;
  out << "cost,q1,median,q3\n";
  for (std::size_t k = 0; k < curve.cost.size(); ++k) {
    out << csv::format_double(curve.cost[k]) << ',' << csv::format_double(curve.q1[k]) << ','
        << csv::format_double(curve.median[k]) << ',' << csv::format_double(curve.q3[k]) << '\n';
  }
  return out.str();
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("write failed: " + path.string());
}

void write_aggregates(const fs::path& dir, const std::vector<QuartileCurve>& curves) {
  fs::create_directories(dir / "aggregates");
  for (const auto& curve : curves) {
    write_file(dir / "aggregates" / (to_string(curve.strategy) + ".csv"), quartile_csv(curve));
  }
}

std::string summary_csv(const ExperimentConfig& cfg, const std::vector<TrajectoryLog>& logs) {
  std::ostringstream out;
  out << "strategy,seed,iterations,final_cost,n_train,final_metric,reason,"
         "fraction_lowest_precision,fraction_highest_precision\n";
  for (const auto& log : logs) {
    const auto lc = make_loop_config(cfg, log.strategy);
    const double lowest = lc.grid.levels[lc.grid.lowest_precision_index()];
    const double highest = lc.grid.levels[lc.grid.highest_precision_index()];
    std::size_t n_low = 0;
    std::size_t n_high = 0;
    for (std::size_t i = 1; i < log.records.size(); ++i) {
      if (log.records[i].precision == lowest) ++n_low;
      if (log.records[i].precision == highest) ++n_high;
    }
    const std::size_t selections = log.records.size() - 1;
    auto fraction = [&](std::size_t k) {
      return selections == 0 ? std::string("nan")
                             : csv::format_double(static_cast<double>(k) / static_cast<double>(selections));
    };
    const auto& last = log.records.back();
    out << to_string(log.strategy) << ',' << log.seed << ',' << selections << ','
        << csv::format_double(last.cumulative_cost) << ',' << last.n_train << ','
        << csv::format_double(last.metric) << ',' << to_string(log.reason) << ','
        << fraction(n_low) << ',' << fraction(n_high) << '\n';
  }
  return out.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                std::size_t workers) {
  if (workers < 1) throw InvalidArgument("need at least one worker");
  const fs::path dir(out_dir);
  fs::create_directories(dir / "trajectories");
  const fs::path marker = dir / "INCOMPLETE";
  write_file(marker, "run in progress or failed\n");

  std::vector<PoolTestSplit> splits;
  splits.reserve(cfg.repeats);
  for (std::size_t r = 0; r < cfg.repeats; ++r) splits.push_back(make_split(cfg, cfg.seed_base + r));

  const std::size_t n_jobs = cfg.repeats * cfg.strategies.size();
  ExperimentResult result;
  result.logs.resize(n_jobs);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::string first_error;
  std::size_t first_error_job = n_jobs;

  auto worker = [&] {
    while (true) {
      const std::size_t job = next.fetch_add(1);
      if (job >= n_jobs) return;
      const Strategy strategy = cfg.strategies[job / cfg.repeats];
      const std::size_t r = job % cfg.repeats;
      const std::uint64_t seed = cfg.seed_base + r;
      try {
        auto log = run(make_loop_config(cfg, strategy), splits[r], seed);
        write_trajectory_csv(log, (dir / "trajectories" /
                                   (to_string(strategy) + "_seed" + std::to_string(seed) + ".csv"))
                                      .string());
        result.logs[job] = std::move(log);
      } catch (const std::exception& e) {
        std::lock_guard lock(error_mutex);
        if (job < first_error_job) {
          first_error_job = job;
          first_error = to_string(strategy) + " seed " + std::to_string(seed) + ": " + e.what();
        }
        next.store(n_jobs);
        return;
      }
    }
  };

  const std::size_t n_threads = std::min(workers, n_jobs);
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (first_error_job < n_jobs) throw Error(first_error);

  result.curves = aggregate(result.logs, cfg.aggregate_grid);
  write_aggregates(dir, result.curves);
  write_file(dir / "summary.csv", summary_csv(cfg, result.logs));
  write_file(dir / "config.ini", serialize_config(cfg));
  fs::remove(marker);
  return result;
}

std::vector<QuartileCurve> aggregate_directory(const std::string& dir, std::size_t grid_points) {
  const fs::path traj = fs::path(dir) / "trajectories";
  if (!fs::is_directory(traj)) throw EmptyInput("no trajectories directory in " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(traj)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<TrajectoryLog> logs;
  for (const auto& f : files) logs.push_back(read_trajectory_csv(f.string()));
  auto curves = aggregate(logs, grid_points);
  write_aggregates(dir, curves);
  return curves;
}

}  // namespace weakal
