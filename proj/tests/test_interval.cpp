#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "lgml/error.hpp"
#include "lgml/interval.hpp"

using namespace lgml;

TEST_CASE("arithmetic rounds outward") {
  const Interval a{0.1, 0.1};
  const Interval s = a + Interval{0.2, 0.2};
  CHECK(s.lo < 0.1 + 0.2);
  CHECK(s.hi > 0.1 + 0.2);
  CHECK(s.contains(0.30000000000000004));
  CHECK(s.contains(0.3));

  const Interval p = Interval{-2, 3} * Interval{-1, 4};
  CHECK(p.lo <= -8.0);
  CHECK(p.hi >= 12.0);
  CHECK(p.lo > -8.0 - 1e-12);

  const Interval q = Interval{1, 2} / Interval{4, 8};
  CHECK(q.contains(Interval{0.125, 0.5}));
  CHECK((-Interval{1, 2}) == Interval{-2, -1});
}

TEST_CASE("elementary functions") {
  CHECK(abs(Interval{-3, 2}).lo == 0.0);
  CHECK(abs(Interval{-3, 2}).hi >= 3.0);
  CHECK(abs(Interval{1, 2}).lo <= 1.0);

  const Interval cube = ipow(Interval{-2, 1}, 3);
  CHECK(cube.lo <= -8.0);
  CHECK(cube.hi >= 1.0);
  const Interval zeroth = ipow(Interval{-2, 1}, 0);
  CHECK(zeroth.contains(1.0));

  const Interval r = sqrt(Interval{4, 9});
  CHECK(r.lo <= 2.0);
  CHECK(r.hi >= 3.0);
  CHECK(sqrt(Interval{0, 1}).lo == 0.0);

  // sin over a range that contains pi/2 and 3pi/2 covers [-1, 1]
  const Interval full = sin(Interval{0, 2 * std::numbers::pi});
  CHECK(full.lo == -1.0);
  CHECK(full.hi == 1.0);
  const Interval narrow = sin(Interval{0.1, 0.2});
  CHECK(narrow.lo <= std::sin(0.1));
  CHECK(narrow.hi >= std::sin(0.2));
  CHECK(narrow.hi < 0.3);
  const Interval wide = cos(Interval{-100, 100});
  CHECK(wide == Interval{-1, 1});
  CHECK(tanh(Interval{-1e9, 1e9}).contains(Interval{-1, 1}));
}

TEST_CASE("property: elementary enclosures contain sampled images") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> c(-10.0, 10.0);
  std::uniform_real_distribution<double> w(0.0, 4.0);
  std::uniform_real_distribution<double> t(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double lo = c(rng);
    const Interval x{lo, lo + w(rng)};
    const Interval y{c(rng), c(rng) + 20.0};
    const Interval s = sin(x), co = cos(x), th = tanh(x), ab = abs(x), p3 = ipow(x, 3), p4 = ipow(x, 4);
    const Interval sum = x + y, diff = x - y, prod = x * y;
    for (int k = 0; k < 20; ++k) {
      const double p = x.lo + t(rng) * x.width();
      const double q = y.lo + t(rng) * y.width();
      REQUIRE(s.contains(std::sin(p)));
      REQUIRE(co.contains(std::cos(p)));
      REQUIRE(th.contains(std::tanh(p)));
      REQUIRE(ab.contains(std::abs(p)));
      REQUIRE(p3.contains(p * p * p));
      REQUIRE(p4.contains(p * p * p * p));
      REQUIRE(sum.contains(p + q));
      REQUIRE(diff.contains(p - q));
      REQUIRE(prod.contains(p * q));
    }
  }
}

TEST_CASE("box parsing and queries") {
  const Box b = Box::parse("x=-pi:pi,y=0:1");
  REQUIRE(b.size() == 2);
  CHECK(b[0].lo == -std::numbers::pi);
  CHECK(b.at("y").hi == 1.0);
  CHECK(b.index_of("y") == 1);
  CHECK(b.has("x"));
  CHECK_FALSE(b.has("z"));
  CHECK(b.contains({0.0, 0.5}));
  CHECK_FALSE(b.contains({0.0, 1.5}));
  CHECK(b.midpoint()[1] == 0.5);
  CHECK_THROWS_AS(b.at("z"), InvalidArgument);

  CHECK_THROWS_AS(Box::parse("x=1:0"), InvalidArgument);
  CHECK_THROWS_AS(Box::parse("x=0:1,x=0:2"), InvalidArgument);
  CHECK_THROWS_AS(Box::parse("x=0"), InvalidArgument);
  CHECK_THROWS_AS(Box::parse("x=0:inf"), InvalidArgument);
  CHECK_THROWS_AS(Box::parse(""), InvalidArgument);
}
