#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lgml/expr.hpp"
#include "lgml/model.hpp"
#include "lgml/verify.hpp"

namespace lgml {

/// Ground-truth label source for counterexample inputs.
class Oracle {
 public:
  /// Closed form over the given feature order. Throws InvalidArgument if
  /// the expression is not ground or uses other variables.
  static Oracle closed_form(Expr expr, std::vector<std::string> features);
  /// Exact or nearest-neighbour (max-norm within `tolerance`) lookup.
  static Oracle table(Dataset points, double tolerance);

  /// Throws OracleError for table misses and evaluation failures.
  double label(std::span<const double> x) const;

  bool is_closed_form() const { return table_.empty(); }
  const std::vector<std::string>& features() const { return features_; }
  const Expr& expr() const { return expr_; }

 private:
  std::vector<std::string> features_;
  Expr expr_;
  CompiledExpr compiled_;
  Dataset table_;
  double tolerance_ = 0.0;
};

struct LgmlConfig {
  AuxTruth truth;
  Box domain;
  std::optional<Oracle> oracle;
  /// Used as given when present; otherwise `initial_count` uniform points
  /// drawn with `seed`.
  std::optional<Dataset> initial_data;
  std::size_t initial_count = 2;
  /// Seeds initial sampling and training.
  std::uint64_t seed = 0;
  MlpConfig model;
  double rho = 1e-2;
  double bisection_tol = 1e-3;
  std::size_t max_iterations = 40;
  Backend backend;
  EpsSearch eps_search = EpsSearch::Auto;
  double eps_max = 1e6;
  /// Counterexamples closer than this (max-norm) to a stored point are
  /// duplicates.
  double duplicate_tol = 1e-9;
  /// When the strongest point is a duplicate, the search is repeated with
  /// max-norm neighbourhoods of this relative radius around stored points
  /// left out, shrinking tenfold until a point above rho turns up or the
  /// radius reaches duplicate_tol (a stall). 0 makes every duplicate a
  /// stall.
  double separation = 1e-3;

  /// Throws InvalidArgument.
  void validate() const;
};

enum class RunStatus { Proved, BudgetExhausted, TrainingFailed };
std::string_view to_string(RunStatus s);

struct IterationRecord {
  std::size_t index = 0;
  std::size_t dataset_size = 0;
  double train_max_residual = 0.0;
  bool underfit = false;
  bool proved = false;
  /// eps* for counterexample iterations, the certified bound when proved.
  double eps_star = 0.0;
  std::optional<std::vector<double>> counterexample;
  /// The strongest point was a duplicate and the counterexample comes from
  /// the search away from stored points.
  bool separated = false;
  double counterexample_violation = 0.0;
  std::optional<double> counterexample_label;
  std::optional<double> test_rmse;
  double elapsed_seconds = 0.0;
};

struct RunResult {
  Mlp final_model;
  std::vector<IterationRecord> trace;
  RunStatus status = RunStatus::BudgetExhausted;
  Dataset dataset;
  std::string message;
};

/// Called after each iteration's verification with the model that was
/// verified and its violation expression.
using IterationObserver = std::function<void(const IterationRecord&, const Mlp&, const ViolationExpr&)>;

/// Samples `count` uniform points in `domain` and labels them.
Dataset sample_uniform(const Box& domain, const Oracle& oracle, std::size_t count, std::uint64_t seed);

/// The corrective loop: train, export, find eps*, then either stop on a
/// proof or label the strongest point and add it to the data. Throws
/// StalledLoopError on a repeated counterexample and propagates oracle
/// and backend errors. `test`, when given, is used for per-iteration RMSE.
RunResult run(const LgmlConfig& config, const Dataset* test = nullptr, const IterationObserver& observer = {});

/// index,dataset_size,train_max_residual,underfit,proved,eps_star,
/// <feature columns>,violation,label,separated,test_rmse,elapsed_seconds
void write_trace_csv(std::ostream& out, const std::vector<IterationRecord>& trace,
                     const std::vector<std::string>& features);

}  // namespace lgml
