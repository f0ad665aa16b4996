#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace lgml {

// Outward-rounded interval arithmetic. Every operation widens its
// round-to-nearest result by at least one ulp on each side, so the
// enclosure property holds without switching the FPU rounding mode.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  constexpr Interval() = default;
  constexpr Interval(double l, double h) : lo(l), hi(h) {}
  static constexpr Interval point(double x) { return {x, x}; }

  bool valid() const { return std::isfinite(lo) && std::isfinite(hi) && lo <= hi; }
  bool contains(double x) const { return lo <= x && x <= hi; }
  bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
  double width() const { return hi - lo; }
  double mid() const { return lo + 0.5 * (hi - lo); }
  double mag() const { return std::max(std::abs(lo), std::abs(hi)); }

  bool operator==(const Interval&) const = default;
};

namespace rounding {

inline double down(double x) { return std::nextafter(x, -std::numeric_limits<double>::infinity()); }
inline double up(double x) { return std::nextafter(x, std::numeric_limits<double>::infinity()); }

inline double down(double x, int ulps) {
  for (int i = 0; i < ulps; ++i) x = down(x);
  return x;
}
inline double up(double x, int ulps) {
  for (int i = 0; i < ulps; ++i) x = up(x);
  return x;
}

}  // namespace rounding

inline Interval operator+(const Interval& a, const Interval& b) {
  return {rounding::down(a.lo + b.lo), rounding::up(a.hi + b.hi)};
}

inline Interval operator-(const Interval& a, const Interval& b) {
  return {rounding::down(a.lo - b.hi), rounding::up(a.hi - b.lo)};
}

inline Interval operator-(const Interval& a) { return {-a.hi, -a.lo}; }

inline Interval operator*(const Interval& a, const Interval& b) {
  const double p1 = a.lo * b.lo;
  const double p2 = a.lo * b.hi;
  const double p3 = a.hi * b.lo;
  const double p4 = a.hi * b.hi;
  return {rounding::down(std::min({p1, p2, p3, p4})), rounding::up(std::max({p1, p2, p3, p4}))};
}

/// Caller guarantees 0 is not in b.
inline Interval operator/(const Interval& a, const Interval& b) {
  const double q1 = a.lo / b.lo;
  const double q2 = a.lo / b.hi;
  const double q3 = a.hi / b.lo;
  const double q4 = a.hi / b.hi;
  return {rounding::down(std::min({q1, q2, q3, q4})), rounding::up(std::max({q1, q2, q3, q4}))};
}

Interval abs(const Interval& a);
Interval ipow(const Interval& a, unsigned n);
/// Caller guarantees a.lo >= 0.
Interval sqrt(const Interval& a);
Interval sin(const Interval& a);
Interval cos(const Interval& a);
Interval tanh(const Interval& a);

/// Axis-aligned box over named features. Order of `names` is the feature
/// order of the problem.
class Box {
 public:
  Box() = default;
  Box(std::vector<std::string> names, std::vector<Interval> ranges);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Interval>& ranges() const { return ranges_; }
  const Interval& operator[](std::size_t i) const { return ranges_[i]; }
  /// Throws InvalidArgument when the feature is absent.
  const Interval& at(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  bool has(std::string_view name) const;
  bool contains(const std::vector<double>& point) const;
  std::vector<double> midpoint() const;

  /// "x=[lo, hi], y=[lo, hi]"
  std::string to_string() const;

  /// Parses "x=-3.14:3.14,y=0:1". Bounds accept plain numbers and the
  /// tokens `pi`, `-pi`.
  static Box parse(std::string_view text);

 private:
  std::vector<std::string> names_;
  std::vector<Interval> ranges_;
};

}  // namespace lgml
