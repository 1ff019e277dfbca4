// weakal: run, aggregate and inspect weak-supervision active learning experiments.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "weakal/csv.hpp"
#include "weakal/errors.hpp"
#include "weakal/experiment.hpp"

namespace {

constexpr const char* kOutDirEnv = "WEAKAL_OUT_DIR";

std::string default_out_dir(const weakal::ExperimentConfig& cfg) {
  if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') return env;
  return cfg.output_dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budgeted active learning with weak annotations"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::size_t workers = 0;
  auto* run = app.add_subcommand("run", "run every (strategy, seed) job of a config");
  run->add_option("config", config_path, "experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, std::string("output directory (default: $") + kOutDirEnv +
                                        ", then run.output_dir)");
  run->add_option("--workers", workers, "parallel jobs (default: run.workers)")
      ->check(CLI::PositiveNumber);

  std::string agg_dir;
  std::size_t grid = 100;
  auto* agg = app.add_subcommand("aggregate", "recompute quartile curves from trajectories");
  agg->add_option("dir", agg_dir, "experiment output directory")->required()->check(CLI::ExistingDirectory);
  agg->add_option("--grid", grid, "cost grid points")->check(CLI::PositiveNumber);

  std::string gen_out;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("gen-data", "write the pool/test split of one seed");
  gen->add_option("config", config_path, "experiment config")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "split CSV to write")->required();
  gen->add_option("--seed", gen_seed, "seed (default: run.seed_base)");

  auto* validate = app.add_subcommand("validate", "parse a config and print it with defaults");
  validate->add_option("config", config_path, "experiment config")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = weakal::parse_config(config_path);
      const std::string dir = out_dir.empty() ? default_out_dir(cfg) : out_dir;
      const auto result = weakal::run_experiment(cfg, dir, workers ? workers : cfg.workers);
      for (const auto& curve : result.curves) {
        std::cout << weakal::to_string(curve.strategy) << ": final median "
                  << weakal::csv::format_double(curve.median.back()) << " at cost "
                  << weakal::csv::format_double(curve.cost.back()) << '\n';
      }
      std::cout << "wrote " << result.logs.size() << " trajectories to " << dir << '\n';
    } else if (*agg) {
      const auto curves = weakal::aggregate_directory(agg_dir, grid);
      std::cout << "wrote " << curves.size() << " aggregate curves to " << agg_dir << "/aggregates\n";
    } else if (*gen) {
      const auto cfg = weakal::parse_config(config_path);
      const auto split = weakal::make_split(cfg, gen_seed.value_or(cfg.seed_base));
      weakal::write_split_csv(split, gen_out);
      std::cout << "wrote " << split.pool_size() << " pool and " << split.test_size()
                << " test points to " << gen_out << '\n';
    } else if (*validate) {
      std::cout << weakal::serialize_config(weakal::parse_config(config_path));
    }
  } catch (const weakal::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
