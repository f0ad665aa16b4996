#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lgml/loop.hpp"
#include "lgml/model.hpp"

namespace lgml {

/// `count` uniform points over `domain` labeled by `oracle`.
Dataset uniform_test_set(const Box& domain, const Oracle& oracle, std::size_t count, std::uint64_t seed);

struct BaselineOptions {
  std::vector<std::size_t> sizes{2, 10, 32, 100, 1000, 10000};
  std::size_t trials = 5;
  std::uint64_t seed = 1000;

  bool operator==(const BaselineOptions&) const = default;
};

/// Every knob of an experiment. Serialised as JSON with nested "model",
/// "bnb" and "baseline" objects; unknown keys are rejected.
struct RunConfig {
  std::string experiment = "sine";
  std::string output = "lgml-out";
  std::uint64_t seed = 0;
  double rho = 1e-2;
  double bisection_tol = 1e-3;
  std::size_t max_iterations = 40;
  std::size_t initial_count = 2;
  double separation = 1e-3;
  std::string truth;
  std::string oracle;
  std::string domain;
  MlpConfig model;
  std::string backend = "bnb";
  std::string solver;
  std::string smt_encoding = "real";
  double solver_timeout = 60.0;
  BnbOptions bnb;
  std::string eps_search = "auto";
  std::size_t test_points = 10000;
  std::uint64_t test_seed = 0x7e57;
  BaselineOptions baseline;
  std::size_t threads = 1;
  std::size_t plot_grid = 512;

  /// Defaults for "sine" or "pythagoras". Throws InvalidArgument otherwise.
  static RunConfig defaults(const std::string& experiment);

  std::string to_json() const;
  /// Starts from the defaults of the file's "experiment" (sine if absent)
  /// and applies the remaining keys. Throws InvalidArgument.
  static RunConfig from_json(std::string_view text);

  /// Applies "key=value" with dotted keys for nested objects, e.g.
  /// "model.hidden=[4,4]" or "bnb.max_boxes=1000". Values are parsed as
  /// JSON and fall back to a plain string. Throws InvalidArgument.
  void set(std::string_view assignment);

  /// Throws InvalidArgument; parses every string field.
  void validate() const;

  /// The loop configuration this run config describes.
  LgmlConfig to_lgml() const;
  Backend to_backend() const;
  EpsSearch to_eps_search() const;

  bool operator==(const RunConfig&) const = default;
};

struct BaselinePoint {
  std::size_t size = 0;
  double rmse = 0.0;
  std::size_t trials = 0;
  /// Trials whose training threw; excluded from the mean.
  std::size_t failures = 0;

  bool operator==(const BaselinePoint&) const = default;
};

struct ExperimentReport {
  std::string experiment;
  RunConfig config;
  RunStatus status = RunStatus::BudgetExhausted;
  std::string message;
  std::vector<IterationRecord> trace;
  std::size_t final_dataset_size = 0;
  double final_rmse = 0.0;
  std::vector<BaselinePoint> baseline_curve;

  std::string to_json() const;
  static ExperimentReport from_json(std::string_view text);
};

struct ExperimentRun {
  ExperimentReport report;
  RunResult result;
  /// iteration, x, fhat(x) on `plot_grid` points; one-dimensional domains only.
  std::vector<std::tuple<std::size_t, double, double>> grid;
};

/// Runs the loop described by `config` and evaluates the final model on
/// `test_points` fresh uniform points.
ExperimentRun run_experiment(const RunConfig& config);
ExperimentRun run_sine(const RunConfig& config);
ExperimentRun run_pythagoras(const RunConfig& config);

/// Trains `config.model` on uniform training sets of each size and
/// reports the mean test RMSE over the trials. Trials run on up to
/// `config.threads` threads; the result does not depend on the count.
std::vector<BaselinePoint> run_baseline(const RunConfig& config);

void write_trace_json(std::ostream& out, const std::vector<IterationRecord>& trace);
void write_curve_csv(std::ostream& out, const std::vector<BaselinePoint>& curve);
void write_grid_csv(std::ostream& out, const std::vector<std::tuple<std::size_t, double, double>>& grid);

}  // namespace lgml
