#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lgml/expr.hpp"
#include "lgml/interval.hpp"
#include "lgml/model.hpp"

namespace lgml::testing {

// Random ground expression over `vars`. Divisors and sqrt arguments are
// kept strictly positive so every point of any box evaluates.
inline Expr random_expr(std::mt19937_64& rng, const std::vector<std::string>& vars, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 11);
  std::uniform_real_distribution<double> cst(-2.0, 2.0);
  std::uniform_int_distribution<std::size_t> var(0, vars.size() - 1);
  auto sub = [&] { return random_expr(rng, vars, depth - 1); };
  switch (pick(rng)) {
    case 0: {
      // negative literals in the form the parser produces
      const double c = std::round(cst(rng) * 8.0) / 8.0;
      return std::signbit(c) ? Expr::unary(Op::Neg, Expr::constant(-c)) : Expr::constant(c);
    }
    case 1: return Expr::var(vars[var(rng)]);
    case 2: return Expr::binary(Op::Add, sub(), sub());
    case 3: return Expr::binary(Op::Sub, sub(), sub());
    case 4: return Expr::binary(Op::Mul, sub(), sub());
    case 5: return Expr::unary(Op::Neg, sub());
    case 6: return Expr::pow(sub(), std::uniform_int_distribution<unsigned>(0, 4)(rng));
    case 7: return Expr::unary(Op::Abs, sub());
    case 8: return Expr::unary(Op::Sin, sub());
    case 9: return Expr::unary(Op::Cos, sub());
    case 10: return Expr::unary(Op::Tanh, sub());
    default: {
      const Expr pos = Expr::binary(Op::Add, Expr::constant(0.5), Expr::pow(sub(), 2));
      return std::bernoulli_distribution(0.5)(rng) ? Expr::binary(Op::Div, sub(), pos) : Expr::unary(Op::Sqrt, pos);
    }
  }
}

inline Box random_box(std::mt19937_64& rng, const std::vector<std::string>& vars) {
  std::uniform_real_distribution<double> c(-3.0, 3.0);
  std::uniform_real_distribution<double> w(0.0, 2.0);
  std::vector<Interval> r;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const double lo = c(rng);
    r.push_back({lo, lo + w(rng)});
  }
  return Box(vars, r);
}

// Random network with weights in [-scale, scale].
inline Mlp random_mlp(std::mt19937_64& rng, std::size_t inputs, const std::vector<std::size_t>& hidden, Activation act,
                      double scale = 1.5) {
  Mlp m(inputs, hidden, act);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& layer : m.layers()) {
    for (auto& w : layer.weights) w = u(rng);
    for (auto& b : layer.bias) b = u(rng);
  }
  return m;
}

}  // namespace lgml::testing
