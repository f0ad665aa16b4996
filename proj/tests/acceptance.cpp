// Acceptance suite: one PASS/FAIL/SKIP line per criterion, details
// indented beneath. Exit status is nonzero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "lgml/bench.hpp"
#include "lgml/error.hpp"
#include "lgml/loop.hpp"
#include "lgml/verify.hpp"
#include "support.hpp"

using namespace lgml;

namespace {

constexpr int kSeeds = 5;

struct Outcome {
  enum Kind { Pass, Fail, Skip } kind = Pass;
  std::vector<std::string> details;

  void note(const std::string& s) { details.push_back(s); }
  void fail(const std::string& s) {
    kind = Fail;
    note("failed: " + s);
  }
};

int failures = 0;

void report(int number, const std::string& title, const Outcome& o) {
  const char* tag = o.kind == Outcome::Pass ? "PASS" : o.kind == Outcome::Fail ? "FAIL" : "SKIP";
  std::cout << tag << " criterion " << number << ": " << title << '\n';
  for (const auto& d : o.details) std::cout << "    " << d << '\n';
  std::cout.flush();
  if (o.kind == Outcome::Fail) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct SeedRun {
  std::uint64_t seed = 0;
  LgmlConfig config;
  RunResult result;
  std::vector<ViolationExpr> violations;
  double rmse = 0.0;
  double seconds = 0.0;
};

SeedRun run_seed(const std::string& experiment, std::uint64_t seed) {
  RunConfig rc = RunConfig::defaults(experiment);
  rc.seed = seed;
  rc.validate();
  SeedRun s;
  s.seed = seed;
  s.config = rc.to_lgml();
  const Dataset test = uniform_test_set(s.config.domain, *s.config.oracle, rc.test_points, rc.test_seed);
  const auto t0 = std::chrono::steady_clock::now();
  s.result = run(s.config, nullptr,
                 [&](const IterationRecord&, const Mlp&, const ViolationExpr& v) { s.violations.push_back(v); });
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  s.rmse = rmse(s.result.final_model, test);
  return s;
}

std::string describe(const SeedRun& s) {
  const auto separated = std::count_if(s.result.trace.begin(), s.result.trace.end(),
                                       [](const IterationRecord& r) { return r.separated; });
  return "seed " + std::to_string(s.seed) + ": " + std::string(to_string(s.result.status)) + " after " +
         std::to_string(s.result.trace.size()) + " iteration(s) (" + std::to_string(separated) + " separated), " +
         std::to_string(s.result.dataset.size()) + " points, test RMSE " + fmt("%.5f", s.rmse) + ", " +
         fmt("%.1f s", s.seconds);
}

// --- 1 ---------------------------------------------------------------------

Outcome sine_reproduction(const std::vector<SeedRun>& runs) {
  Outcome o;
  double best = INFINITY, total = 0.0;
  for (const auto& s : runs) {
    o.note(describe(s));
    best = std::min(best, s.rmse);
    total += s.seconds;
    if (!(s.rmse <= 0.1)) o.fail("seed " + std::to_string(s.seed) + " RMSE above 0.1");
  }
  o.note("best RMSE " + fmt("%.5f", best) + ", total " + fmt("%.0f s", total));
  if (!(best <= 0.05)) o.fail("no seed reached RMSE 0.05");
  return o;
}

// --- 2 ---------------------------------------------------------------------

Outcome data_efficiency(const std::vector<SeedRun>& runs) {
  Outcome o;
  RunConfig rc = RunConfig::defaults("sine");
  rc.baseline.sizes = {1000};
  const auto t0 = std::chrono::steady_clock::now();
  const BaselinePoint b = run_baseline(rc).front();
  o.note("baseline at 1000 points: mean RMSE " + fmt("%.5f", b.rmse) + " over " + std::to_string(b.trials) +
         " trials (" + std::to_string(b.failures) + " failed), " +
         fmt("%.0f s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));

  int wins = 0;
  for (const auto& s : runs) {
    const bool win = s.rmse < b.rmse && s.result.dataset.size() <= 42;
    wins += win;
    o.note("seed " + std::to_string(s.seed) + ": LGML RMSE " + fmt("%.5f", s.rmse) + " with " +
           std::to_string(s.result.dataset.size()) + " points, " + (win ? "lower" : "not lower"));
  }
  o.note(std::to_string(wins) + " of " + std::to_string(runs.size()) + " seeds below the baseline");
  if (wins < 4) o.fail("fewer than 4 of 5 seeds beat the 1000-point baseline");

  return o;
}

// The 10,000-point comparison is reported, not gated. Under-fit trials
// run every restart to the patience limit, so the default is one trial;
// LGML_ACCEPTANCE_TRIALS_10K changes the count and 0 skips it.
void large_baseline() {
  RunConfig rc = RunConfig::defaults("sine");
  rc.baseline.sizes = {10000};
  rc.baseline.trials = 1;
  if (const char* env = std::getenv("LGML_ACCEPTANCE_TRIALS_10K")) rc.baseline.trials = std::stoul(env);
  if (rc.baseline.trials == 0) return;
  const auto t0 = std::chrono::steady_clock::now();
  const BaselinePoint p = run_baseline(rc).front();
  std::cout << "INFO baseline at 10000 points (reported only): mean RMSE " << fmt("%.5f", p.rmse) << " over "
            << p.trials << " trial(s), "
            << fmt("%.0f s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) << '\n';
}

// --- 3 ---------------------------------------------------------------------

Outcome pythagoras(const std::vector<SeedRun>& runs) {
  Outcome o;
  int proved = 0;
  for (const auto& s : runs) {
    const double x[2] = {3.0, 4.0};
    const double f = s.result.final_model.predict(x);
    o.note(describe(s) + ", f(3,4) = " + fmt("%.4f", f));
    if (s.result.status == RunStatus::Proved && s.result.trace.size() <= 40) ++proved;
    if (!(std::abs(f - 5.0) <= 0.5)) o.fail("seed " + std::to_string(s.seed) + ": f(3,4) not within 0.5 of 5");
  }
  if (proved < 4) o.fail("only " + std::to_string(proved) + " of 5 seeds proved");
  return o;
}

// --- 4 ---------------------------------------------------------------------

Outcome soundness(const std::vector<SeedRun>& sine) {
  Outcome o;
  // (a) random expression/box pairs
  std::mt19937_64 rng(4040);
  std::uniform_real_distribution<double> t(0.0, 1.0);
  int pairs = 0, points = 0, outside = 0;
  while (pairs < 1000) {
    const Expr e = testing::random_expr(rng, {"x", "y"}, 4);
    const Box box = testing::random_box(rng, {"x", "y"});
    Interval r;
    try {
      r = eval_interval(e, box);
    } catch (const DomainError&) {
      continue;
    }
    ++pairs;
    for (int k = 0; k < 10; ++k) {
      const double p[2] = {box[0].lo + t(rng) * box[0].width(), box[1].lo + t(rng) * box[1].width()};
      try {
        const double v = eval(e, box.names(), p);
        ++points;
        if (!r.contains(v)) ++outside;
      } catch (const DomainError&) {
      }
    }
  }
  o.note("(a) " + std::to_string(pairs) + " pairs, " + std::to_string(points) + " points, " +
         std::to_string(outside) + " outside their enclosure");
  if (outside > 0) o.fail("(a) enclosure violated");

  // (b) certified bound against a 10^6-point grid, final sine models
  // (c) bracketing of eps* for the same models
  const std::size_t n = 1'000'000;
  for (const auto& s : sine) {
    const ViolationExpr& v = s.violations.back();
    const MaximizeResult m = maximize(v, 1e-9);
    const CompiledExpr c(v.v, v.domain.names());
    double grid_max = -INFINITY;
    const Interval d = v.domain[0];
    for (std::size_t i = 0; i < n; ++i) {
      const double x[1] = {d.lo + (d.hi - d.lo) * static_cast<double>(i) / static_cast<double>(n - 1)};
      grid_max = std::max(grid_max, c.evaluate(x));
    }
    const bool ok = m.upper_bound >= grid_max - 1e-9;
    o.note("(b) seed " + std::to_string(s.seed) + ": certified bound " + fmt("%.9g", m.upper_bound) + ", grid max " +
           fmt("%.9g", grid_max));
    if (!ok) o.fail("(b) certified bound below the grid maximum");

    EpsStarOptions eo;
    eo.rho = s.config.rho;
    eo.bisection_tol = s.config.bisection_tol;
    const auto r = find_eps_star(v, Backend{}, eo);
    const auto* e = std::get_if<EpsStarResult>(&r);
    if (e == nullptr || !(e->eps_star > eo.rho)) {
      o.note("(c) seed " + std::to_string(s.seed) + ": proved at rho, no bracket to check");
      continue;
    }
    const double tol = eo.bisection_tol * std::max(1.0, e->eps_star);
    const bool above = !is_sat(check(v, e->eps_star + 2 * tol));
    const bool below = is_sat(check(v, std::max(eo.rho, e->eps_star - 2 * tol)));
    o.note("(c) seed " + std::to_string(s.seed) + ": eps* " + fmt("%.6g", e->eps_star) + ", Unsat above " +
           (above ? "yes" : "no") + ", Sat below " + (below ? "yes" : "no"));
    if (!above || !below) o.fail("(c) eps* not bracketed");
  }
  return o;
}

// --- 5 ---------------------------------------------------------------------

Outcome derivatives() {
  Outcome o;
  std::mt19937_64 rng(5050);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const double h = 1e-5;
  double worst = 0.0;
  int bad = 0, checks = 0;
  for (int n = 0; n < 20; ++n) {
    const std::size_t inputs = 1 + n % 2;
    const Mlp m = testing::random_mlp(rng, inputs, {3, 3}, Activation::Tanh);
    const SymbolicModel s = to_expr(m);
    for (int k = 0; k < 100; ++k) {
      std::vector<double> x(inputs);
      for (auto& v : x) v = u(rng);
      for (std::size_t i = 0; i < inputs; ++i) {
        std::vector<double> hi = x, lo = x;
        hi[i] += h;
        lo[i] -= h;
        const double fd = (m.predict(hi) - m.predict(lo)) / (2 * h);
        const double an = eval(s.gradient[i], s.features, x);
        const double rel = std::abs(an - fd) / (1.0 + std::abs(an));
        worst = std::max(worst, rel);
        ++checks;
        if (rel > 1e-6) ++bad;
      }
    }
  }
  o.note(std::to_string(checks) + " partials, worst |analytic - central| / (1 + |analytic|) = " + fmt("%.3g", worst));
  if (bad > 0) o.fail(std::to_string(bad) + " partial(s) off by more than 1e-6");
  return o;
}

// --- 6 ---------------------------------------------------------------------

std::string find_solver() {
  if (const char* env = std::getenv("LGML_SOLVER"); env && *env) return env;
  if (std::system("command -v z3 >/dev/null 2>&1") == 0) return "z3 -in";
  return {};
}

Outcome backend_agreement() {
  Outcome o;
  const std::string solver = find_solver();
  if (solver.empty()) {
    o.kind = Outcome::Skip;
    o.note("no solver: set LGML_SOLVER or put z3 on the PATH");
    return o;
  }
  o.note("solver: " + solver);
  std::mt19937_64 rng(6060);
  const AuxTruth truth = AuxTruth::parse("f(x) = x^2 - x/2");
  const Box domain = Box::parse("x=-1:1");
  const double tol = 1e-3;
  int compared = 0, excluded = 0, disagreements = 0;
  for (int n = 0; n < 10; ++n) {
    Mlp m = testing::random_mlp(rng, 1, {3}, Activation::Relu, 2.0);
    m.set_features({"x"});
    const ViolationExpr v = build_violation(truth, to_expr(m), domain);
    const double eps_star = maximize(v, 1e-9).upper_bound;
    for (double eps : {0.01, 0.1, 1.0, 10.0}) {
      if (std::abs(eps - eps_star) <= tol * std::max(1.0, eps_star)) {
        ++excluded;
        continue;
      }
      const bool bnb = is_sat(check(v, eps));
      bool smt = false;
      try {
        smt = is_sat(check_external(emit_smtlib(v, eps, SmtEncoding::Real), v, eps, solver, 60));
      } catch (const SolverError& e) {
        o.fail("model " + std::to_string(n) + " eps " + fmt("%g", eps) + ": " + e.what());
        continue;
      }
      ++compared;
      if (bnb != smt) {
        ++disagreements;
        o.fail("model " + std::to_string(n) + " eps " + fmt("%g", eps) + ": bnb " + (bnb ? "sat" : "unsat") +
               ", smt " + (smt ? "sat" : "unsat"));
      }
    }
  }
  o.note(std::to_string(compared) + " verdicts compared, " + std::to_string(excluded) + " within tol of eps*, " +
         std::to_string(disagreements) + " disagreement(s)");
  return o;
}

// --- 7 ---------------------------------------------------------------------

void bookkeeping_for(Outcome& o, const std::string& name, const SeedRun& s) {
  const auto& trace = s.result.trace;
  const std::size_t n0 = s.config.initial_count;
  if (s.violations.size() != trace.size()) o.fail(name + ": violation expressions missing");
  int cex = 0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    if (trace[k].dataset_size != n0 + k) o.fail(name + ": dataset size at iteration " + std::to_string(k));
    if (trace[k].counterexample) {
      ++cex;
      const double v = eval(s.violations[k].v, s.config.domain.names(), *trace[k].counterexample);
      if (!(v > s.config.rho)) o.fail(name + ": counterexample at iteration " + std::to_string(k) + " not above rho");
    } else if (!trace[k].proved) {
      o.fail(name + ": iteration " + std::to_string(k) + " has neither proof nor counterexample");
    }
  }
  if (s.result.status == RunStatus::Proved) {
    if (is_sat(check(s.violations.back(), s.config.rho))) o.fail(name + ": proof does not re-verify at rho");
  }
  o.note(name + ": " + std::to_string(trace.size()) + " iterations, " + std::to_string(cex) +
         " counterexamples re-evaluated" + (s.result.status == RunStatus::Proved ? ", proof re-verified" : ""));
}

Outcome bookkeeping(const std::vector<SeedRun>& sine, const std::vector<SeedRun>& pyth) {
  Outcome o;
  for (const auto& s : sine) bookkeeping_for(o, "sine seed " + std::to_string(s.seed), s);
  for (const auto& s : pyth) bookkeeping_for(o, "pythagoras seed " + std::to_string(s.seed), s);
  return o;
}

}  // namespace

int main() {
  std::vector<SeedRun> sine, pyth;
  try {
    for (int s = 0; s < kSeeds; ++s) sine.push_back(run_seed("sine", s));
    report(1, "sine reproduction", sine_reproduction(sine));
    report(2, "data efficiency against the 1000-point baseline", data_efficiency(sine));
    for (int s = 0; s < kSeeds; ++s) pyth.push_back(run_seed("pythagoras", s));
    report(3, "pythagoras termination", pythagoras(pyth));
    report(4, "verification soundness", soundness(sine));
    report(5, "derivative check", derivatives());
    report(6, "cross-backend agreement", backend_agreement());
    report(7, "loop bookkeeping", bookkeeping(sine, pyth));
    large_baseline();
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << '\n';
    return 1;
  }
  std::cout << failures << " criterion/criteria failed\n";
  return failures == 0 ? 0 : 1;
}
