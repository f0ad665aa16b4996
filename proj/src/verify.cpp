#include "lgml/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <optional>
#include <queue>

#include "lgml/error.hpp"

namespace lgml {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Cell {
  double ub = 0.0;
  std::uint64_t seq = 0;
  std::vector<Interval> box;
};

struct CellOrder {
  bool operator()(const Cell& a, const Cell& b) const {
    if (a.ub != b.ub) return a.ub < b.ub;
    return a.seq > b.seq;
  }
};

// Shared machinery for check() and maximize().
class BranchAndBound {
 public:
  BranchAndBound(const ViolationExpr& v, const BnbOptions& opts)
      : names_(v.domain.names()), f_(v.v, v.domain.names()), opts_(opts), root_(v.domain.ranges()) {
    if (!(opts.min_box_width > 0.0)) throw InvalidArgument("min_box_width must be positive");
    for (const auto& r : root_) root_width_.push_back(r.width());
  }

  const std::vector<Interval>& root() const { return root_; }

  Interval enclose(const std::vector<Interval>& box) const {
    try {
      return f_.enclose(box);
    } catch (const DomainError& err) {
      throw DomainError(err.what(), Box(names_, box));
    }
  }

  double value(const std::vector<double>& x, const std::vector<Interval>& box) const {
    try {
      return f_.evaluate(x);
    } catch (const DomainError& err) {
      throw DomainError(err.what(), Box(names_, box));
    }
  }

  // Midpoint first, then corners (for up to three dimensions) in
  // lexicographic order. Stops early when `visit` returns true.
  template <typename Visit>
  bool sample(const std::vector<Interval>& box, bool corners, Visit&& visit) const {
    std::vector<double> x(box.size());
    for (std::size_t i = 0; i < box.size(); ++i) x[i] = box[i].mid();
    if (visit(x, value(x, box))) return true;
    if (!corners || box.size() > 3) return false;
    const std::size_t n = std::size_t{1} << box.size();
    for (std::size_t mask = 0; mask < n; ++mask) {
      for (std::size_t i = 0; i < box.size(); ++i) {
        x[i] = (mask >> (box.size() - 1 - i)) & 1 ? box[i].hi : box[i].lo;
      }
      if (visit(x, value(x, box))) return true;
    }
    return false;
  }

  bool tiny(const std::vector<Interval>& box) const { return relative_width(box, widest(box)) < opts_.min_box_width; }

  std::pair<std::vector<Interval>, std::vector<Interval>> split(const std::vector<Interval>& box) const {
    const std::size_t d = widest(box);
    auto left = box;
    auto right = box;
    const double m = box[d].mid();
    left[d].hi = m;
    right[d].lo = m;
    return {std::move(left), std::move(right)};
  }

  void count_box() {
    if (++boxes_ > opts_.max_boxes) {
      throw InconclusiveError("branch-and-bound budget of " + std::to_string(opts_.max_boxes) + " boxes exhausted");
    }
  }

  std::size_t boxes() const { return boxes_; }
  std::uint64_t next_seq() { return seq_++; }

 private:
  double relative_width(const std::vector<Interval>& box, std::size_t i) const {
    return root_width_[i] > 0.0 ? box[i].width() / root_width_[i] : 0.0;
  }

  std::size_t widest(const std::vector<Interval>& box) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < box.size(); ++i) {
      if (relative_width(box, i) > relative_width(box, best)) best = i;
    }
    return best;
  }

  std::vector<std::string> names_;
  CompiledExpr f_;
  BnbOptions opts_;
  std::vector<Interval> root_;
  std::vector<double> root_width_;
  std::size_t boxes_ = 0;
  std::uint64_t seq_ = 0;
};

bool better(double value, const std::vector<double>& x, double best, const std::vector<double>& best_x) {
  if (value != best) return value > best;
  return std::lexicographical_compare(x.begin(), x.end(), best_x.begin(), best_x.end());
}

}  // namespace

ViolationExpr build_violation(const AuxTruth& truth, const SymbolicModel& fhat, const Box& domain) {
  for (const auto& side : {truth.alpha, truth.beta}) {
    for (const auto& name : variables(side)) {
      if (!domain.has(name)) throw InvalidArgument("auxiliary truth mentions '" + name + "', which is not in the domain");
    }
  }
  for (const auto& name : fhat.features) {
    if (!domain.has(name)) throw InvalidArgument("model feature '" + name + "' is not in the domain");
  }
  const Expr a = substitute_f(truth.alpha, fhat);
  const Expr b = substitute_f(truth.beta, fhat);
  if (truth.relation == Relation::Equality) return {sym::abs(sym::sub(a, b)), domain, truth.relation};
  return {sym::sub(b, a), domain, truth.relation};
}

VerifyOutcome check(const ViolationExpr& v, double eps, const BnbOptions& opts) {
  if (v.relation == Relation::Equality && eps < 0.0) {
    throw InvalidArgument("eps must be non-negative for an equality truth");
  }
  BranchAndBound bb(v, opts);
  std::optional<Sat> found;
  auto probe = [&](const std::vector<Interval>& box, bool corners) {
    bb.sample(box, corners, [&](const std::vector<double>& x, double val) {
      if (val > eps) {
        found = Sat{x, val};
        return true;
      }
      return false;
    });
    return found.has_value();
  };

  double certified = -kInf;
  std::priority_queue<Cell, std::vector<Cell>, CellOrder> heap;
  const Interval root = bb.enclose(bb.root());
  if (root.hi <= eps) return Unsat{root.hi};
  if (probe(bb.root(), true)) return *found;
  heap.push({root.hi, bb.next_seq(), bb.root()});

  while (!heap.empty()) {
    Cell cell = heap.top();
    heap.pop();
    if (cell.ub <= eps) {
      certified = std::max(certified, cell.ub);
      break;
    }
    bb.count_box();
    if (cell.seq != 0 && probe(cell.box, true)) return *found;
    if (bb.tiny(cell.box)) {
      // Not splittable: keep its enclosure in the bound.
      certified = std::max(certified, cell.ub);
      continue;
    }
    auto [left, right] = bb.split(cell.box);
    for (auto* child : {&left, &right}) {
      const double ub = bb.enclose(*child).hi;
      if (ub <= eps) {
        certified = std::max(certified, ub);
      } else {
        heap.push({ub, bb.next_seq(), std::move(*child)});
      }
    }
  }
  return Unsat{certified};
}

namespace {

class Excluder {
 public:
  Excluder(const Exclusion* ex, const Box& domain) {
    if (ex == nullptr) return;
    if (!(ex->separation >= 0.0)) throw InvalidArgument("separation must be >= 0");
    centers_ = ex->centers;
    for (const auto& c : centers_) {
      if (c.size() != domain.size()) throw InvalidArgument("exclusion centre has the wrong dimension");
    }
    for (std::size_t i = 0; i < domain.size(); ++i) radius_.push_back(ex->separation * domain[i].width());
  }

  bool point(const std::vector<double>& x) const {
    for (const auto& c : centers_) {
      bool inside = true;
      for (std::size_t i = 0; i < x.size() && inside; ++i) inside = std::abs(x[i] - c[i]) < radius_[i];
      if (inside) return true;
    }
    return false;
  }

  bool box(const std::vector<Interval>& b) const {
    for (const auto& c : centers_) {
      bool inside = true;
      for (std::size_t i = 0; i < b.size() && inside; ++i) {
        inside = b[i].lo >= c[i] - radius_[i] && b[i].hi <= c[i] + radius_[i];
      }
      if (inside) return true;
    }
    return false;
  }

 private:
  std::vector<std::vector<double>> centers_;
  std::vector<double> radius_;
};

}  // namespace

MaximizeResult maximize(const ViolationExpr& v, double tol, const BnbOptions& opts, const Exclusion* exclude) {
  if (!(tol > 0.0)) throw InvalidArgument("maximize tolerance must be positive");
  BranchAndBound bb(v, opts);
  const Excluder ex(exclude, v.domain);
  MaximizeResult r{-kInf, {}, -kInf, 0};
  auto probe = [&](const std::vector<Interval>& box) {
    bb.sample(box, true, [&](const std::vector<double>& x, double val) {
      if (ex.point(x)) return false;
      if (r.best_point.empty() || better(val, x, r.best_value, r.best_point)) {
        r.best_value = val;
        r.best_point = x;
      }
      return false;
    });
  };
  auto slack = [&] { return tol * std::max(1.0, std::abs(r.best_value)); };

  std::priority_queue<Cell, std::vector<Cell>, CellOrder> heap;
  probe(bb.root());
  heap.push({bb.enclose(bb.root()).hi, bb.next_seq(), bb.root()});
  while (!heap.empty()) {
    Cell cell = heap.top();
    heap.pop();
    if (cell.ub <= r.best_value + slack()) {
      r.upper_bound = std::max(r.upper_bound, cell.ub);
      break;
    }
    bb.count_box();
    if (cell.seq != 0) probe(cell.box);
    if (bb.tiny(cell.box)) {
      r.upper_bound = std::max(r.upper_bound, cell.ub);
      continue;
    }
    auto [left, right] = bb.split(cell.box);
    for (auto* child : {&left, &right}) {
      if (ex.box(*child)) continue;
      const double ub = bb.enclose(*child).hi;
      if (ub <= r.best_value + slack()) {
        r.upper_bound = std::max(r.upper_bound, ub);
      } else {
        heap.push({ub, bb.next_seq(), std::move(*child)});
      }
    }
  }
  r.upper_bound = std::max(r.upper_bound, r.best_value);
  r.boxes = bb.boxes();
  return r;
}

// ---------------------------------------------------------------------------

VerifyOutcome decide(const ViolationExpr& v, double eps, const Backend& backend) {
  if (backend.kind == Backend::Kind::BranchAndBound) return check(v, eps, backend.bnb);
  const std::string script = emit_smtlib(v, eps, backend.encoding);
  try {
    return check_external(script, v, eps, backend.solver_command, backend.timeout_seconds);
  } catch (const SolverError& err) {
    if (!backend.fallback_to_bnb) throw;
    std::cerr << "lgml: external solver failed (" << err.what() << "); deciding eps=" << eps
              << " with branch-and-bound\n";
    return check(v, eps, backend.bnb);
  }
}

namespace {

EpsStarOutcome eps_star_bisection(const ViolationExpr& v, const Backend& backend, const EpsStarOptions& opts) {
  std::vector<TrailEntry> trail;
  std::optional<Sat> best;
  auto query = [&](double eps) {
    VerifyOutcome o = decide(v, eps, backend);
    trail.push_back({eps, o});
    if (const auto* s = std::get_if<Sat>(&o)) {
      if (!best || better(s->violation, s->witness, best->violation, best->witness)) best = *s;
    }
    return o;
  };

  VerifyOutcome first = query(opts.rho);
  if (const auto* u = std::get_if<Unsat>(&first)) return Proof{u->certified_upper_bound, std::move(trail)};

  // Double while sat. A witness above eps already proves sat there.
  double eps = opts.rho;
  for (;;) {
    eps *= 2.0;
    while (eps < best->violation) eps *= 2.0;
    if (eps > opts.eps_max) {
      throw Error("violation exceeds eps_max=" + std::to_string(opts.eps_max) + " (diverged model?)");
    }
    if (!is_sat(query(eps))) break;
  }
  double hi = eps;
  double lo = std::min(hi, std::max(eps / 2.0, best->violation));
  while (hi - lo > opts.bisection_tol * std::max(1.0, hi)) {
    const double mid = lo + 0.5 * (hi - lo);
    if (is_sat(query(mid))) {
      lo = std::min(hi, std::max(mid, best->violation));
    } else {
      hi = mid;
    }
  }
  return EpsStarResult{lo + 0.5 * (hi - lo), best->witness, best->violation, std::move(trail)};
}

EpsStarOutcome eps_star_direct(const ViolationExpr& v, const Backend& backend, const EpsStarOptions& opts) {
  const MaximizeResult m = maximize(v, opts.bisection_tol, backend.bnb);
  if (m.upper_bound <= opts.rho) return Proof{m.upper_bound, {{m.upper_bound, Unsat{m.upper_bound}}}};
  if (m.best_value > opts.eps_max) {
    throw Error("violation exceeds eps_max=" + std::to_string(opts.eps_max) + " (diverged model?)");
  }
  if (m.best_value > opts.rho) {
    std::vector<TrailEntry> trail{{opts.rho, Sat{m.best_point, m.best_value}}, {m.upper_bound, Unsat{m.upper_bound}}};
    return EpsStarResult{m.best_value, m.best_point, m.best_value, std::move(trail)};
  }
  // The incumbent is below rho but the bound is not: decide rho exactly.
  VerifyOutcome o = check(v, opts.rho, backend.bnb);
  std::vector<TrailEntry> trail{{opts.rho, o}};
  if (const auto* u = std::get_if<Unsat>(&o)) return Proof{u->certified_upper_bound, std::move(trail)};
  const Sat& s = std::get<Sat>(o);
  return EpsStarResult{s.violation, s.witness, s.violation, std::move(trail)};
}

}  // namespace

EpsStarOutcome find_eps_star(const ViolationExpr& v, const Backend& backend, const EpsStarOptions& opts) {
  if (!(opts.rho > 0.0)) throw InvalidArgument("rho must be positive");
  if (!(opts.bisection_tol > 0.0)) throw InvalidArgument("bisection_tol must be positive");
  EpsSearch search = opts.search;
  if (search == EpsSearch::Auto) {
    search = backend.kind == Backend::Kind::BranchAndBound ? EpsSearch::DirectMaximize : EpsSearch::Bisection;
  }
  if (search == EpsSearch::DirectMaximize) {
    if (backend.kind != Backend::Kind::BranchAndBound) {
      throw InvalidArgument("direct maximisation needs the branch-and-bound backend");
    }
    return eps_star_direct(v, backend, opts);
  }
  return eps_star_bisection(v, backend, opts);
}

}  // namespace lgml
