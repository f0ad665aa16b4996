#include <cmath>
#include <sstream>

#include "doctest.h"
#include "lgml/error.hpp"
#include "lgml/loop.hpp"

using namespace lgml;

namespace {

LgmlConfig sine_config() {
  LgmlConfig c;
  c.truth = AuxTruth::parse("f(x)^2 + df(x,x)^2 = 1");
  c.domain = Box::parse("x=-pi:pi");
  c.oracle = Oracle::closed_form(parse_expr("sin(x)"), {"x"});
  return c;
}

LgmlConfig hypot_config() {
  LgmlConfig c;
  c.truth = AuxTruth::parse("a + b > f(a,b)");
  c.domain = Box::parse("a=0.1:10,b=0.1:10");
  c.oracle = Oracle::closed_form(parse_expr("sqrt(a^2 + b^2)"), {"a", "b"});
  c.initial_count = 16;
  return c;
}

struct Seen {
  IterationRecord record;
  ViolationExpr v;
};

// Runs the loop and keeps each iteration's violation expression.
RunResult run_recording(const LgmlConfig& c, std::vector<Seen>& seen) {
  return run(c, nullptr, [&](const IterationRecord& r, const Mlp&, const ViolationExpr& v) { seen.push_back({r, v}); });
}

// The bookkeeping every finished run must satisfy.
void check_bookkeeping(const LgmlConfig& c, const RunResult& r, const std::vector<Seen>& seen) {
  REQUIRE(seen.size() == r.trace.size());
  for (std::size_t k = 0; k < r.trace.size(); ++k) {
    const IterationRecord& rec = r.trace[k];
    CHECK(rec.index == k);
    CHECK(rec.dataset_size == c.initial_count + k);
    if (rec.counterexample) {
      const double v = eval(seen[k].v.v, c.domain.names(), *rec.counterexample);
      CHECK(v > c.rho);
      CHECK(v == rec.counterexample_violation);
      CHECK(c.domain.contains(*rec.counterexample));
    }
  }
  if (r.status == RunStatus::Proved) {
    CHECK(r.trace.back().proved);
    CHECK_FALSE(r.trace.back().counterexample.has_value());
    CHECK_FALSE(is_sat(check(seen.back().v, c.rho)));
    CHECK(r.dataset.size() == c.initial_count + r.trace.size() - 1);
  } else {
    CHECK(r.dataset.size() == c.initial_count + r.trace.size());
  }
}

}  // namespace

TEST_CASE("oracles") {
  const Oracle s = Oracle::closed_form(parse_expr("sin(x)"), {"x"});
  const double zero[1] = {0.0};
  CHECK(s.label(zero) == 0.0);
  CHECK(s.is_closed_form());
  const Oracle h = Oracle::closed_form(parse_expr("sqrt(a^2 + b^2)"), {"a", "b"});
  const double tri[2] = {3.0, 4.0};
  CHECK(h.label(tri) == 5.0);

  Dataset d({"x"});
  d.add({1.0}, 7.0);
  const Oracle t = Oracle::table(d, 1e-6);
  CHECK_FALSE(t.is_closed_form());
  const double near[1] = {1.0 + 1e-9};
  CHECK(t.label(near) == 7.0);
  const double far[1] = {1.1};
  CHECK_THROWS_AS(t.label(far), OracleError);

  CHECK_THROWS_AS(Oracle::closed_form(parse_expr("f(x)"), {"x"}), InvalidArgument);
  CHECK_THROWS_AS(Oracle::closed_form(parse_expr("y"), {"x"}), InvalidArgument);
  const Oracle bad = Oracle::closed_form(parse_expr("sqrt(x)"), {"x"});
  const double neg[1] = {-1.0};
  CHECK_THROWS_AS(bad.label(neg), OracleError);
}

TEST_CASE("uniform sampling") {
  const LgmlConfig c = hypot_config();
  const Dataset a = sample_uniform(c.domain, *c.oracle, 50, 3);
  const Dataset b = sample_uniform(c.domain, *c.oracle, 50, 3);
  REQUIRE(a.size() == 50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(c.domain.contains(a[i].x));
    CHECK(std::abs(a[i].y - std::hypot(a[i].x[0], a[i].x[1])) <= 1e-15 * a[i].y);
  }
  CHECK(sample_uniform(c.domain, *c.oracle, 50, 4)[0].x != a[0].x);
}

TEST_CASE("config validation") {
  LgmlConfig c = sine_config();
  CHECK_NOTHROW(c.validate());
  c.max_iterations = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = sine_config();
  c.oracle.reset();
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = sine_config();
  c.oracle = Oracle::closed_form(parse_expr("sin(y)"), {"y"});
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = sine_config();
  Dataset outside({"x"});
  outside.add({4.0}, std::sin(4.0));
  c.initial_data = outside;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = sine_config();
  c.rho = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = sine_config();
  c.truth = AuxTruth::parse("f(x, y) = x");
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.truth = AuxTruth::parse("f(x) = y");
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = sine_config();
  c.truth.alpha = parse_expr("x");
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("one iteration exhausts a budget of one") {
  LgmlConfig c = sine_config();
  c.max_iterations = 1;
  c.model.hidden = {1};
  c.model.max_epochs = 2000;
  std::vector<Seen> seen;
  const RunResult r = run_recording(c, seen);
  CHECK(r.status == RunStatus::BudgetExhausted);
  REQUIRE(r.trace.size() == 1);
  CHECK(r.dataset.size() == c.initial_count + 1);
  check_bookkeeping(c, r, seen);
}

TEST_CASE("sine loop bookkeeping and reproducibility") {
  LgmlConfig c = sine_config();
  c.max_iterations = 6;
  std::vector<Seen> first, second;
  const RunResult a = run_recording(c, first);
  const RunResult b = run_recording(c, second);
  check_bookkeeping(c, a, first);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    CHECK(a.trace[k].eps_star == b.trace[k].eps_star);
    CHECK(a.trace[k].counterexample == b.trace[k].counterexample);
    CHECK(a.trace[k].train_max_residual == b.trace[k].train_max_residual);
  }
  CHECK(a.final_model == b.final_model);

  std::ostringstream csv;
  write_trace_csv(csv, a.trace, {"x"});
  const std::string text = csv.str();
  CHECK(text.rfind(
            "index,dataset_size,train_max_residual,underfit,proved,eps_star,x,violation,label,separated,test_rmse,"
            "elapsed_seconds\n",
            0) == 0);
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == a.trace.size() + 1);
}

TEST_CASE("per-iteration test rmse") {
  LgmlConfig c = sine_config();
  c.max_iterations = 2;
  const Dataset test = sample_uniform(c.domain, *c.oracle, 200, 99);
  const RunResult r = run(c, &test);
  for (const auto& rec : r.trace) {
    REQUIRE(rec.test_rmse.has_value());
    CHECK(*rec.test_rmse >= 0.0);
  }
}

TEST_CASE("a weak truth is proved at once") {
  LgmlConfig c = sine_config();
  c.rho = 10;
  std::vector<Seen> seen;
  const RunResult r = run_recording(c, seen);
  CHECK(r.status == RunStatus::Proved);
  CHECK(r.trace.size() == 1);
  check_bookkeeping(c, r, seen);
}

TEST_CASE("triangle inequality loop is proved") {
  const LgmlConfig c = hypot_config();
  std::vector<Seen> seen;
  const RunResult r = run_recording(c, seen);
  CHECK(r.status == RunStatus::Proved);
  check_bookkeeping(c, r, seen);
}

TEST_CASE("an inverted truth never proves") {
  LgmlConfig c = hypot_config();
  c.truth = AuxTruth::parse("f(a,b) > a + b");
  c.max_iterations = 3;
  std::vector<Seen> seen;
  const RunResult r = run_recording(c, seen);
  CHECK(r.status == RunStatus::BudgetExhausted);
  CHECK(r.trace.size() == 3);
  for (const auto& rec : r.trace) CHECK(rec.counterexample.has_value());
  check_bookkeeping(c, r, seen);
}

TEST_CASE("repeated counterexamples stall without separation") {
  // the strongest points of early sine models sit on the domain ends,
  // which is where the first samples are placed here
  LgmlConfig c = sine_config();
  Dataset ends({"x"});
  ends.add({-std::numbers::pi}, std::sin(-std::numbers::pi));
  ends.add({std::numbers::pi}, std::sin(std::numbers::pi));
  c.initial_data = ends;
  c.separation = 0;
  c.max_iterations = 40;
  CHECK_THROWS_AS(run(c), StalledLoopError);
}
