#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "lgml/error.hpp"
#include "lgml/model.hpp"
#include "lgml/verify.hpp"
#include "support.hpp"

using namespace lgml;

namespace {

ViolationExpr ground(const char* v, const char* domain, Relation rel = Relation::GreaterThan) {
  return {parse_expr(v), Box::parse(domain), rel};
}

SymbolicModel model_of(const char* value, std::vector<std::string> features) {
  return SymbolicModel::from_value(std::move(features), parse_expr(value));
}

double value_at(const ViolationExpr& v, std::span<const double> x) { return eval(v.v, v.domain.names(), x); }

}  // namespace

TEST_CASE("violation construction") {
  const AuxTruth sine = AuxTruth::parse("f(x)^2 + df(x,x)^2 = 1");
  const ViolationExpr vs = build_violation(sine, model_of("sin(x)", {"x"}), Box::parse("x=-pi:pi"));
  CHECK(vs.v.op() == Op::Abs);
  const double x[1] = {0.7};
  CHECK(value_at(vs, x) <= 1e-15);

  const AuxTruth tri = AuxTruth::parse("a + b > f(a,b)");
  const ViolationExpr vt = build_violation(tri, model_of("a * b", {"a", "b"}), Box::parse("a=0:1,b=0:1"));
  CHECK(vt.v.op() == Op::Sub);
  const double ab[2] = {3, 4};
  CHECK(value_at(vt, ab) == 12.0 - 7.0);

  AuxTruth same;
  same.alpha = parse_expr("1");
  same.beta = parse_expr("1");
  const ViolationExpr z = build_violation(same, model_of("x", {"x"}), Box::parse("x=0:1"));
  CHECK(eval_interval(z.v, z.domain).hi <= 1e-300);

  CHECK_THROWS_AS(build_violation(AuxTruth::parse("f(y) = y"), model_of("y", {"y"}), Box::parse("x=0:1")),
                  InvalidArgument);
}

TEST_CASE("property: substituted truth matches numeric composition") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  const AuxTruth sine = AuxTruth::parse("f(x)^2 + df(x,x)^2 = 1");
  const Mlp m = testing::random_mlp(rng, 1, {3, 3}, Activation::Tanh);
  Mlp named = m;
  named.set_features({"x"});
  const ViolationExpr v = build_violation(sine, to_expr(named), Box::parse("x=-pi:pi"));
  for (int i = 0; i < 100; ++i) {
    const double x[1] = {u(rng)};
    const double f = m.predict(x);
    const double g = m.predict_gradient(x)[0];
    CHECK(std::abs(value_at(v, x) - std::abs(f * f + g * g - 1.0)) <= 1e-12);
  }
}

TEST_CASE("branch-and-bound decisions") {
  const VerifyOutcome a = check(ground("-(x^2)", "x=-1:1"), 0.5);
  REQUIRE_FALSE(is_sat(a));
  CHECK(std::get<Unsat>(a).certified_upper_bound <= 0.5);

  const ViolationExpr lin = ground("x", "x=0:2");
  const VerifyOutcome b = check(lin, 1.0);
  REQUIRE(is_sat(b));
  const Sat& s = std::get<Sat>(b);
  CHECK(s.violation > 1.0);
  CHECK(s.violation == value_at(lin, s.witness));

  const VerifyOutcome c = check(ground("abs(sin(x)^2 + cos(x)^2 - 1)", "x=0:6.283185307179586", Relation::Equality), 1e-6);
  CHECK_FALSE(is_sat(c));

  CHECK_THROWS_AS(check(ground("sqrt(x)", "x=-1:1"), 0.0), DomainError);
  BnbOptions tiny;
  tiny.max_boxes = 3;
  CHECK_THROWS_AS(check(ground("-abs(x - 0.3)", "x=0:1"), -1e-9, tiny), InconclusiveError);
}

TEST_CASE("property: Sat witnesses re-evaluate above eps; Unsat bounds dominate samples") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> t(0.0, 1.0);
  std::uniform_real_distribution<double> e(-2.0, 2.0);
  int sats = 0, unsats = 0;
  for (int i = 0; i < 150; ++i) {
    const Expr ex = testing::random_expr(rng, {"x", "y"}, 3);
    const ViolationExpr v{ex, testing::random_box(rng, {"x", "y"}), Relation::GreaterThan};
    const double eps = e(rng);
    VerifyOutcome o;
    try {
      o = check(v, eps);
    } catch (const Error&) {
      continue;
    }
    if (is_sat(o)) {
      ++sats;
      const Sat& s = std::get<Sat>(o);
      CHECK(v.domain.contains(s.witness));
      CHECK(value_at(v, s.witness) == s.violation);
      CHECK(s.violation > eps);
    } else {
      ++unsats;
      const double bound = std::get<Unsat>(o).certified_upper_bound;
      for (int k = 0; k < 200; ++k) {
        const double p[2] = {v.domain[0].lo + t(rng) * v.domain[0].width(),
                             v.domain[1].lo + t(rng) * v.domain[1].width()};
        REQUIRE(value_at(v, p) <= bound);
      }
    }
  }
  CHECK(sats > 20);
  CHECK(unsats > 20);
}

TEST_CASE("branch-and-bound is deterministic") {
  const ViolationExpr v = ground("sin(3*x) * cos(y) - x*y/10", "x=-2:2,y=-2:2");
  const MaximizeResult a = maximize(v, 1e-6);
  const MaximizeResult b = maximize(v, 1e-6);
  CHECK(a.best_point == b.best_point);
  CHECK(a.upper_bound == b.upper_bound);
  CHECK(a.upper_bound >= a.best_value);
  CHECK(a.upper_bound - a.best_value <= 1e-6 * std::max(1.0, std::abs(a.best_value)));
  const Sat s1 = std::get<Sat>(check(v, 0.5));
  const Sat s2 = std::get<Sat>(check(v, 0.5));
  CHECK(s1.witness == s2.witness);
}

TEST_CASE("maximisation with exclusions") {
  const ViolationExpr v = ground("x", "x=0:2");
  Exclusion ex{{{2.0}}, 0.1};
  const MaximizeResult r = maximize(v, 1e-9, {}, &ex);
  REQUIRE(r.best_point.size() == 1);
  // the neighbourhood of 2 has radius 0.2; its boundary is still a candidate
  CHECK(r.best_point[0] <= 1.8 + 1e-9);
  CHECK(r.best_point[0] >= 1.8 - 1e-6);

  Exclusion all{{{1.0}}, 0.6};
  const MaximizeResult none = maximize(v, 1e-9, {}, &all);
  CHECK(none.best_point.empty());
}

TEST_CASE("eps* search") {
  EpsStarOptions o;
  o.rho = 1e-3;
  const Backend bnb;

  // f-hat = 0 under the sine truth
  const ViolationExpr zero =
      build_violation(AuxTruth::parse("f(x)^2 + df(x,x)^2 = 1"), model_of("0", {"x"}), Box::parse("x=-pi:pi"));
  const auto r0 = find_eps_star(zero, bnb, o);
  REQUIRE(std::holds_alternative<EpsStarResult>(r0));
  CHECK(std::abs(std::get<EpsStarResult>(r0).eps_star - 1.0) <= o.bisection_tol);

  o.rho = 0.01;
  const ViolationExpr lin = ground("x", "x=0:2");
  for (EpsSearch mode : {EpsSearch::DirectMaximize, EpsSearch::Bisection}) {
    o.search = mode;
    const auto r = find_eps_star(lin, bnb, o);
    REQUIRE(std::holds_alternative<EpsStarResult>(r));
    const EpsStarResult& e = std::get<EpsStarResult>(r);
    CHECK(std::abs(e.eps_star - 2.0) <= 2 * o.bisection_tol * 2.0);
    CHECK(std::abs(e.strongest_point[0] - 2.0) <= 2 * o.bisection_tol * 2.0);
    CHECK(value_at(lin, e.strongest_point) >= e.eps_star - o.bisection_tol * 2.0);
    for (const TrailEntry& q : e.trail)
      if (q.eps > e.eps_star + o.bisection_tol * 2.0) CHECK_FALSE(is_sat(q.outcome));
  }
  o.search = EpsSearch::Auto;

  const ViolationExpr hyp =
      build_violation(AuxTruth::parse("a + b > f(a,b)"), model_of("sqrt(a^2 + b^2)", {"a", "b"}),
                      Box::parse("a=0.1:10,b=0.1:10"));
  const auto p = find_eps_star(hyp, bnb, o);
  REQUIRE(std::holds_alternative<Proof>(p));
  CHECK(std::get<Proof>(p).certified_upper_bound <= o.rho);

  o.rho = 0;
  CHECK_THROWS_AS(find_eps_star(lin, bnb, o), InvalidArgument);
  o.rho = 0.01;
  o.eps_max = 0.5;
  o.search = EpsSearch::Bisection;
  CHECK_THROWS_AS(find_eps_star(lin, bnb, o), Error);
}

TEST_CASE("property: eps* brackets and both searches agree") {
  std::mt19937_64 rng(10);
  EpsStarOptions o;
  const Backend bnb;
  int checked = 0;
  for (int i = 0; i < 12; ++i) {
    Mlp m = testing::random_mlp(rng, 1, {3, 3}, Activation::Tanh, 1.0);
    m.set_features({"x"});
    const ViolationExpr v =
        build_violation(AuxTruth::parse("f(x)^2 + df(x,x)^2 = 1"), to_expr(m), Box::parse("x=-pi:pi"));
    o.search = EpsSearch::DirectMaximize;
    const auto d = find_eps_star(v, bnb, o);
    o.search = EpsSearch::Bisection;
    const auto b = find_eps_star(v, bnb, o);
    if (!std::holds_alternative<EpsStarResult>(d)) continue;
    REQUIRE(std::holds_alternative<EpsStarResult>(b));
    const double es = std::get<EpsStarResult>(d).eps_star;
    const double tol = o.bisection_tol * std::max(1.0, es);
    CHECK(std::abs(es - std::get<EpsStarResult>(b).eps_star) <= 2 * tol);
    if (es > o.rho) {
      CHECK_FALSE(is_sat(check(v, es + 2 * tol)));
      CHECK(is_sat(check(v, std::max(o.rho, es - 2 * tol))));
      ++checked;
    }
  }
  CHECK(checked >= 8);
}
