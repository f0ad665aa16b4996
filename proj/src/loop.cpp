#include "lgml/loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "lgml/error.hpp"

namespace lgml {

Oracle Oracle::closed_form(Expr expr, std::vector<std::string> features) {
  if (!expr.is_ground()) throw InvalidArgument("oracle expression must not mention f: " + to_string(expr));
  for (const auto& name : variables(expr)) {
    if (std::find(features.begin(), features.end(), name) == features.end()) {
      throw InvalidArgument("oracle expression uses unknown feature '" + name + "'");
    }
  }
  Oracle o;
  o.compiled_ = CompiledExpr(expr, features);
  o.features_ = std::move(features);
  o.expr_ = std::move(expr);
  return o;
}

Oracle Oracle::table(Dataset points, double tolerance) {
  if (points.empty()) throw InvalidArgument("oracle table is empty");
  if (!(tolerance >= 0.0) || !std::isfinite(tolerance)) throw InvalidArgument("oracle tolerance must be finite and >= 0");
  Oracle o;
  o.features_ = points.features();
  o.table_ = std::move(points);
  o.tolerance_ = tolerance;
  return o;
}

double Oracle::label(std::span<const double> x) const {
  if (x.size() != features_.size()) {
    throw InvalidArgument("oracle expects " + std::to_string(features_.size()) + " inputs, got " +
                          std::to_string(x.size()));
  }
  if (is_closed_form()) {
    try {
      return compiled_.evaluate(x);
    } catch (const DomainError& e) {
      throw OracleError(std::string("oracle evaluation failed: ") + e.what());
    }
  }
  double best = std::numeric_limits<double>::infinity();
  const LabeledPoint* hit = nullptr;
  for (const auto& p : table_.points()) {
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d = std::max(d, std::abs(p.x[i] - x[i]));
    if (d < best) {
      best = d;
      hit = &p;
    }
  }
  if (hit == nullptr || best > tolerance_) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "no oracle table entry within " << tolerance_ << " of (";
    for (std::size_t i = 0; i < x.size(); ++i) msg << (i ? ", " : "") << x[i];
    msg << ")";
    throw OracleError(msg.str());
  }
  return hit->y;
}

void LgmlConfig::validate() const {
  truth.validate();
  if (domain.size() == 0) throw InvalidArgument("domain is empty");
  if (!oracle) throw InvalidArgument("an oracle is required");
  if (oracle->features() != domain.names()) throw InvalidArgument("oracle features must match the domain variables");
  const auto arity = f_arity(truth.alpha) ? f_arity(truth.alpha) : f_arity(truth.beta);
  if (arity && *arity != domain.size()) {
    throw InvalidArgument("f takes " + std::to_string(*arity) + " argument(s) but the domain has " +
                          std::to_string(domain.size()) + " feature(s)");
  }
  for (const auto& side : {truth.alpha, truth.beta}) {
    for (const auto& name : variables(side)) {
      if (!domain.has(name)) throw InvalidArgument("auxiliary truth mentions '" + name + "', which is not in the domain");
    }
  }
  if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
  if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidArgument("rho must be positive");
  if (!(bisection_tol > 0.0) || !std::isfinite(bisection_tol)) throw InvalidArgument("bisection_tol must be positive");
  if (!(eps_max > rho)) throw InvalidArgument("eps_max must exceed rho");
  if (!(duplicate_tol >= 0.0)) throw InvalidArgument("duplicate_tol must be >= 0");
  if (!(separation >= 0.0) || !(separation < 1.0)) throw InvalidArgument("separation must be in [0, 1)");
  if (initial_data) {
    if (initial_data->features() != domain.names()) throw InvalidArgument("initial data features must match the domain");
    if (initial_data->empty()) throw InvalidArgument("initial data is empty");
    for (const auto& p : initial_data->points()) {
      if (!domain.contains(p.x)) throw InvalidArgument("initial data point outside the domain");
    }
  } else if (initial_count < 1) {
    throw InvalidArgument("initial_count must be >= 1");
  }
  MlpConfig m = model;
  m.input_dim = domain.size();
  m.validate();
}

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Proved: return "proved";
    case RunStatus::BudgetExhausted: return "budget_exhausted";
    case RunStatus::TrainingFailed: return "training_failed";
  }
  return "?";
}

Dataset sample_uniform(const Box& domain, const Oracle& oracle, std::size_t count, std::uint64_t seed) {
  Dataset data(domain.names());
  std::mt19937_64 rng(seed);
  std::size_t draws = 0;
  while (data.size() < count) {
    if (++draws > 100 * count + 100) throw InvalidArgument("could not draw distinct sample points");
    std::vector<double> x(domain.size());
    for (std::size_t i = 0; i < domain.size(); ++i) {
      std::uniform_real_distribution<double> u(domain[i].lo, domain[i].hi);
      x[i] = domain[i].lo == domain[i].hi ? domain[i].lo : std::min(u(rng), domain[i].hi);
    }
    const double y = oracle.label(x);
    data.add(std::move(x), y);
  }
  return data;
}

RunResult run(const LgmlConfig& config, const Dataset* test, const IterationObserver& observer) {
  config.validate();
  using Clock = std::chrono::steady_clock;

  RunResult result;
  result.dataset = config.initial_data ? *config.initial_data
                                       : sample_uniform(config.domain, *config.oracle, config.initial_count, config.seed);

  MlpConfig mc = config.model;
  mc.input_dim = config.domain.size();
  mc.seed = config.seed;

  double min_width = std::numeric_limits<double>::infinity();
  for (const auto& r : config.domain.ranges()) min_width = std::min(min_width, r.width());

  EpsStarOptions eo;
  eo.rho = config.rho;
  eo.bisection_tol = config.bisection_tol;
  eo.eps_max = config.eps_max;
  eo.search = config.eps_search;

  for (std::size_t k = 0; k < config.max_iterations; ++k) {
    const auto start = Clock::now();
    IterationRecord rec;
    rec.index = k;
    rec.dataset_size = result.dataset.size();

    FitResult fit;
    try {
      fit = train(mc, result.dataset);
    } catch (const TrainingError& e) {
      result.status = RunStatus::TrainingFailed;
      result.message = e.what();
      return result;
    }
    rec.train_max_residual = fit.max_residual;
    rec.underfit = fit.underfit;
    result.final_model = fit.model;
    if (test != nullptr) rec.test_rmse = rmse(fit.model, *test);

    const SymbolicModel fhat = to_expr(fit.model);
    const ViolationExpr v = build_violation(config.truth, fhat, config.domain);
    const EpsStarOutcome outcome = find_eps_star(v, config.backend, eo);

    if (const auto* proof = std::get_if<Proof>(&outcome)) {
      rec.proved = true;
      rec.eps_star = proof->certified_upper_bound;
      rec.elapsed_seconds = std::chrono::duration<double>(Clock::now() - start).count();
      result.trace.push_back(rec);
      if (observer) observer(rec, fit.model, v);
      result.status = RunStatus::Proved;
      return result;
    }

    const auto& found = std::get<EpsStarResult>(outcome);
    rec.eps_star = found.eps_star;
    std::vector<double> point = found.strongest_point;
    double violation = found.strongest_violation;
    if (result.dataset.contains_near(point, config.duplicate_tol)) {
      // Shrink the left-out neighbourhoods until some point violates rho
      // or they are no wider than the duplicate tolerance.
      MaximizeResult away{};
      Exclusion ex{{}, config.separation};
      for (const auto& p : result.dataset.points()) ex.centers.push_back(p.x);
      for (; ex.separation * min_width > config.duplicate_tol; ex.separation /= 10.0) {
        away = maximize(v, config.bisection_tol, config.backend.bnb, &ex);
        if (!away.best_point.empty() && away.best_value > config.rho) break;
      }
      if (away.best_point.empty() || !(away.best_value > config.rho)) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "stalled loop: iteration " << k << " returned counterexample (";
        for (std::size_t i = 0; i < point.size(); ++i) msg << (i ? ", " : "") << point[i];
        msg << ") with violation " << violation
            << ", which is already in the dataset, and no other point violates rho; rho may be too small"
               " for the model capacity";
        throw StalledLoopError(msg.str());
      }
      point = away.best_point;
      violation = away.best_value;
      rec.separated = true;
    }
    rec.counterexample = point;
    rec.counterexample_violation = violation;
    const double y = config.oracle->label(point);
    rec.counterexample_label = y;
    result.dataset.add(std::move(point), y);
    rec.elapsed_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    result.trace.push_back(rec);
    if (observer) observer(rec, fit.model, v);
  }
  result.status = RunStatus::BudgetExhausted;
  return result;
}

namespace {

void put(std::ostream& out, double x) {
  if (std::isfinite(x)) out << x;
}

}  // namespace

void write_trace_csv(std::ostream& out, const std::vector<IterationRecord>& trace,
                     const std::vector<std::string>& features) {
  const auto old = out.precision(17);
  out << "index,dataset_size,train_max_residual,underfit,proved,eps_star";
  for (const auto& f : features) out << ',' << f;
  out << ",violation,label,separated,test_rmse,elapsed_seconds\n";
  for (const auto& r : trace) {
    out << r.index << ',' << r.dataset_size << ',';
    put(out, r.train_max_residual);
    out << ',' << (r.underfit ? 1 : 0) << ',' << (r.proved ? 1 : 0) << ',';
    put(out, r.eps_star);
    for (std::size_t i = 0; i < features.size(); ++i) {
      out << ',';
      if (r.counterexample) put(out, (*r.counterexample)[i]);
    }
    out << ',';
    if (r.counterexample) put(out, r.counterexample_violation);
    out << ',';
    if (r.counterexample_label) put(out, *r.counterexample_label);
    out << ',' << (r.separated ? 1 : 0) << ',';
    if (r.test_rmse) put(out, *r.test_rmse);
    out << ',';
    put(out, r.elapsed_seconds);
    out << '\n';
  }
  out.precision(old);
}

}  // namespace lgml
