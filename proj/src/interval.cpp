#include "lgml/interval.hpp"

#include <charconv>
#include <numbers>
#include <sstream>

#include "lgml/error.hpp"

namespace lgml {

namespace {

// glibc documents at most 2 ulp error for sin, cos and tanh in
// round-to-nearest; widen by one more.
constexpr int kTranscendentalUlps = 3;

double pow_down(double base, unsigned n) {
  // base >= 0
  double r = 1.0;
  for (unsigned i = 0; i < n; ++i) r = rounding::down(r * base);
  return std::max(r, 0.0);
}

double pow_up(double base, unsigned n) {
  double r = 1.0;
  for (unsigned i = 0; i < n; ++i) r = rounding::up(r * base);
  return r;
}

// True when [lo, hi] (slightly inflated) contains phase + 2*pi*k for some k.
bool hits_phase(double lo, double hi, double phase) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double slack = 1e-12 * (1.0 + std::max(std::abs(lo), std::abs(hi)));
  const double k = std::ceil((lo - slack - phase) / two_pi);
  return phase + two_pi * k <= hi + slack;
}

double parse_bound(std::string_view s) {
  if (s == "pi") return std::numbers::pi;
  if (s == "-pi") return -std::numbers::pi;
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw InvalidArgument("invalid domain bound '" + std::string(s) + "'");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

Interval abs(const Interval& a) {
  if (a.lo >= 0.0) return a;
  if (a.hi <= 0.0) return -a;
  return {0.0, std::max(-a.lo, a.hi)};
}

Interval ipow(const Interval& a, unsigned n) {
  if (n == 0) return Interval::point(1.0);
  if (n == 1) return a;
  if (a.lo >= 0.0) return {pow_down(a.lo, n), pow_up(a.hi, n)};
  if (a.hi <= 0.0) {
    if (n % 2 == 0) return {pow_down(-a.hi, n), pow_up(-a.lo, n)};
    return {-pow_up(-a.lo, n), -pow_down(-a.hi, n)};
  }
  if (n % 2 == 0) return {0.0, pow_up(std::max(-a.lo, a.hi), n)};
  return {-pow_up(-a.lo, n), pow_up(a.hi, n)};
}

Interval sqrt(const Interval& a) {
  // sqrt is correctly rounded under IEEE 754.
  return {std::max(0.0, rounding::down(std::sqrt(a.lo))), rounding::up(std::sqrt(a.hi))};
}

Interval sin(const Interval& a) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  if (a.width() >= 2.0 * std::numbers::pi) return {-1.0, 1.0};
  const double s1 = std::sin(a.lo);
  const double s2 = std::sin(a.hi);
  double lo = rounding::down(std::min(s1, s2), kTranscendentalUlps);
  double hi = rounding::up(std::max(s1, s2), kTranscendentalUlps);
  if (hits_phase(a.lo, a.hi, half_pi)) hi = 1.0;
  if (hits_phase(a.lo, a.hi, -half_pi)) lo = -1.0;
  return {std::max(lo, -1.0), std::min(hi, 1.0)};
}

Interval cos(const Interval& a) {
  if (a.width() >= 2.0 * std::numbers::pi) return {-1.0, 1.0};
  const double c1 = std::cos(a.lo);
  const double c2 = std::cos(a.hi);
  double lo = rounding::down(std::min(c1, c2), kTranscendentalUlps);
  double hi = rounding::up(std::max(c1, c2), kTranscendentalUlps);
  if (hits_phase(a.lo, a.hi, 0.0)) hi = 1.0;
  if (hits_phase(a.lo, a.hi, std::numbers::pi)) lo = -1.0;
  return {std::max(lo, -1.0), std::min(hi, 1.0)};
}

Interval tanh(const Interval& a) {
  return {std::max(-1.0, rounding::down(std::tanh(a.lo), kTranscendentalUlps)),
          std::min(1.0, rounding::up(std::tanh(a.hi), kTranscendentalUlps))};
}

Box::Box(std::vector<std::string> names, std::vector<Interval> ranges)
    : names_(std::move(names)), ranges_(std::move(ranges)) {
  if (names_.size() != ranges_.size()) {
    throw InvalidArgument("box has " + std::to_string(names_.size()) + " names but " +
                          std::to_string(ranges_.size()) + " ranges");
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!ranges_[i].valid()) {
      throw InvalidArgument("invalid interval for feature '" + names_[i] + "'");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (names_[i] == names_[j]) throw InvalidArgument("duplicate feature '" + names_[i] + "' in box");
    }
  }
}

std::size_t Box::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw InvalidArgument("feature '" + std::string(name) + "' not in box");
}

const Interval& Box::at(std::string_view name) const { return ranges_[index_of(name)]; }

bool Box::has(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

bool Box::contains(const std::vector<double>& point) const {
  if (point.size() != ranges_.size()) return false;
  for (std::size_t i = 0; i < point.size(); ++i) {
    if (!ranges_[i].contains(point[i])) return false;
  }
  return true;
}

std::vector<double> Box::midpoint() const {
  std::vector<double> m(ranges_.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = ranges_[i].mid();
  return m;
}

std::string Box::to_string() const {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (i) os << ", ";
    os << names_[i] << "=[" << ranges_[i].lo << ", " << ranges_[i].hi << "]";
  }
  return os.str();
}

Box Box::parse(std::string_view text) {
  std::vector<std::string> names;
  std::vector<Interval> ranges;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    const auto colon = item.find(':', eq == std::string_view::npos ? 0 : eq);
    if (eq == std::string_view::npos || colon == std::string_view::npos) {
      throw InvalidArgument("domain item '" + std::string(item) + "' is not of the form name=lo:hi");
    }
    names.emplace_back(trim(item.substr(0, eq)));
    const double lo = parse_bound(trim(item.substr(eq + 1, colon - eq - 1)));
    const double hi = parse_bound(trim(item.substr(colon + 1)));
    if (!(lo <= hi)) throw InvalidArgument("empty domain interval for '" + names.back() + "'");
    ranges.push_back({lo, hi});
  }
  if (names.empty()) throw InvalidArgument("empty domain");
  return Box(std::move(names), std::move(ranges));
}

UnsupportedNodeError::UnsupportedNodeError(std::vector<std::string> nodes)
    : Error([&] {
        std::string msg = "unsupported node(s) for this encoding:";
        for (const auto& n : nodes) msg += " " + n;
        return msg;
      }()),
      nodes_(std::move(nodes)) {}

}  // namespace lgml
