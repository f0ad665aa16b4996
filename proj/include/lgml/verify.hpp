#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lgml/expr.hpp"
#include "lgml/interval.hpp"

namespace lgml {

/// Ground violation measure v over the input domain. The negated weakened
/// truth is "exists x in domain with v(x) > eps".
struct ViolationExpr {
  Expr v;
  Box domain;
  Relation relation = Relation::Equality;
};

/// Equality:    v = |alpha[f/fhat] - beta[f/fhat]|
/// GreaterThan: v = beta[f/fhat] - alpha[f/fhat]
/// A truth that never mentions f is accepted here and gives a constant v.
/// Throws InvalidArgument when the truth mentions features outside the
/// domain or substitution fails.
ViolationExpr build_violation(const AuxTruth& truth, const SymbolicModel& fhat, const Box& domain);

struct Unsat {
  /// Upper bound of v over the whole domain. It is <= eps except for the
  /// enclosure slack of boxes resolved at the minimum width.
  double certified_upper_bound = 0.0;
};

struct Sat {
  std::vector<double> witness;
  /// v(witness), recomputed in double precision; always > eps.
  double violation = 0.0;
};

using VerifyOutcome = std::variant<Unsat, Sat>;

inline bool is_sat(const VerifyOutcome& o) { return std::holds_alternative<Sat>(o); }

struct BnbOptions {
  /// Boxes whose widest side, relative to the domain, is below this are
  /// not split further.
  double min_box_width = 1e-7;
  std::size_t max_boxes = 10'000'000;

  bool operator==(const BnbOptions&) const = default;
};

/// Decides "exists x: v(x) > eps" by interval branch-and-bound. Throws
/// DomainError (with the offending sub-box) and InconclusiveError when the
/// box budget runs out. Single-threaded and deterministic.
VerifyOutcome check(const ViolationExpr& v, double eps, const BnbOptions& opts = {});

struct MaximizeResult {
  double best_value = 0.0;
  std::vector<double> best_point;
  /// Certified upper bound of v; upper_bound - best_value <= tol * max(1, |best_value|)
  /// unless minimum-width boxes were hit.
  double upper_bound = 0.0;
  std::size_t boxes = 0;
};

/// Max-norm neighbourhoods left out of a search. The radius along each
/// axis is `separation` times the domain width on that axis.
struct Exclusion {
  std::vector<std::vector<double>> centers;
  double separation = 0.0;
};

/// Global maximisation of v by branch-and-bound with the incumbent as the
/// pruning threshold. Ties go to the lexicographically smallest point.
/// With `exclude`, points strictly inside an excluded neighbourhood are
/// never candidates and fully covered boxes are dropped; best_point is
/// empty if no candidate was found.
MaximizeResult maximize(const ViolationExpr& v, double tol, const BnbOptions& opts = {},
                        const Exclusion* exclude = nullptr);

// ---------------------------------------------------------------------------
// SMT-LIB

enum class SmtEncoding { Real, Float16 };

/// Complete SMT-LIB2 script: declarations, domain bounds, v > eps,
/// (check-sat), (get-model). Real uses QF_NRA; Float16 uses QF_FP with
/// round-to-nearest-even. Shared sub-terms become let bindings. Throws
/// UnsupportedNodeError for tanh, sin, cos and sqrt.
std::string emit_smtlib(const ViolationExpr& v, double eps, SmtEncoding encoding);

/// Runs `solver_command` through /bin/sh with `script` on standard input.
/// A sat answer is turned into Sat with the violation recomputed from
/// `v`; unsat into Unsat{eps}. Throws SolverError (Unknown, Timeout,
/// MalformedModel, SpuriousWitness, ExitFailure, LaunchFailure).
VerifyOutcome check_external(const std::string& script, const ViolationExpr& v, double eps,
                             const std::string& solver_command, double timeout_seconds);

/// Round a double to IEEE binary16 bits with the given SMT rounding mode
/// name ("RNE", "RTP", "RTN", "RTZ").
std::uint16_t to_half_bits(double x, std::string_view rounding_mode);
double half_bits_to_double(std::uint16_t bits);

// ---------------------------------------------------------------------------
// Strongest counterexample

struct Backend {
  enum class Kind { BranchAndBound, ExternalSmt };
  Kind kind = Kind::BranchAndBound;
  BnbOptions bnb;
  std::string solver_command;
  SmtEncoding encoding = SmtEncoding::Real;
  double timeout_seconds = 60.0;
  /// Re-decide with branch-and-bound when the solver errors out.
  bool fallback_to_bnb = true;
};

enum class EpsSearch {
  /// DirectMaximize for branch-and-bound, Bisection for external solvers.
  Auto,
  /// Query eps = rho, double while sat, then bisect.
  Bisection,
  /// Maximise v directly (branch-and-bound only).
  DirectMaximize,
};

struct EpsStarOptions {
  double rho = 1e-2;
  /// Relative: brackets are closed to bisection_tol * max(1, eps).
  double bisection_tol = 1e-3;
  double eps_max = 1e6;
  EpsSearch search = EpsSearch::Auto;
};

struct TrailEntry {
  double eps = 0.0;
  VerifyOutcome outcome;
};

/// fhat satisfies the weakened truth at rho.
struct Proof {
  double certified_upper_bound = 0.0;
  std::vector<TrailEntry> trail;
};

struct EpsStarResult {
  double eps_star = 0.0;
  std::vector<double> strongest_point;
  double strongest_violation = 0.0;
  std::vector<TrailEntry> trail;
};

using EpsStarOutcome = std::variant<Proof, EpsStarResult>;

/// One decision query through the configured backend.
VerifyOutcome decide(const ViolationExpr& v, double eps, const Backend& backend);

/// Finds the threshold separating sat from unsat weakened queries and the
/// strongest erroneous point, or proves the truth at rho. Throws
/// InvalidArgument for rho <= 0 or tol <= 0, Error when doubling passes
/// eps_max, and propagates backend errors.
EpsStarOutcome find_eps_star(const ViolationExpr& v, const Backend& backend, const EpsStarOptions& opts);

}  // namespace lgml
