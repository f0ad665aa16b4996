#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lgml/interval.hpp"

namespace lgml {

enum class Op : std::uint8_t {
  Const,
  Var,
  Neg,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Abs,
  Sqrt,
  Sin,
  Cos,
  Tanh,
  Sign,    // internal: derivative of Abs; sign(0) = 0
  FApp,    // unknown f applied to args
  FDeriv,  // partial of f with respect to `name`, applied to args
};

std::string_view op_name(Op op);

/// Immutable expression DAG. Copies share nodes; equality is structural.
class Expr {
 public:
  struct Node;

  /// Const 0.
  Expr();

  static Expr constant(double value);
  static Expr var(std::string name);
  static Expr unary(Op op, Expr child);
  static Expr binary(Op op, Expr lhs, Expr rhs);
  static Expr pow(Expr base, unsigned exponent);
  static Expr fapp(std::vector<Expr> args);
  static Expr fderiv(std::string wrt, std::vector<Expr> args);

  Op op() const;
  double value() const;
  /// Variable name for Var, differentiation feature for FDeriv.
  const std::string& name() const;
  unsigned exponent() const;
  /// Operands, or call arguments for FApp/FDeriv.
  std::span<const Expr> children() const;
  const Expr& child(std::size_t i) const { return children()[i]; }

  bool is_const() const { return op() == Op::Const; }
  bool is_const(double v) const { return op() == Op::Const && value() == v; }
  bool is_ground() const;

  /// Node identity, stable for the lifetime of any copy.
  const Node* id() const { return node_.get(); }

 private:
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

struct Expr::Node {
  Op op = Op::Const;
  double value = 0.0;
  unsigned exponent = 0;
  std::string name;
  std::vector<Expr> children;
  bool ground = true;
};

bool operator==(const Expr& a, const Expr& b);
inline bool operator!=(const Expr& a, const Expr& b) { return !(a == b); }

/// Prints in the input grammar; parse(to_string(e)) == e for every
/// parser-produced e. Negative constants print as a negated literal.
std::string to_string(const Expr& e);

/// Structural dump, e.g. Sub(Add(Pow(FApp[x],2),...),Const 1).
std::string debug_string(const Expr& e);

/// Number of nodes in the tree expansion (shared nodes counted per use).
std::size_t node_count(const Expr& e);
/// Number of distinct nodes in the DAG.
std::size_t dag_size(const Expr& e);

std::set<std::string> variables(const Expr& e);

/// Arity of f/df applications, nullopt if there are none. Throws
/// InvalidArgument when applications disagree.
std::optional<std::size_t> f_arity(const Expr& e);
bool mentions_f(const Expr& e);

// ---------------------------------------------------------------------------
// Parsing

/// Parses the expression grammar:
///   expr   := term (('+'|'-') term)*
///   term   := factor (('*'|'/') factor)*
///   factor := base ('^' uint)?
///   base   := number | ident | 'f' '(' args ')' | 'df' '(' ident ',' args ')'
///           | ('abs'|'sqrt'|'sin'|'cos'|'tanh') '(' expr ')' | '(' expr ')' | '-' base
/// `sign(expr)` is also accepted so that printed derivatives re-parse.
/// No folding is performed. Throws ParseError with a byte offset.
Expr parse_expr(std::string_view text);
/// As above and additionally checks that every f/df application has the
/// given arity.
Expr parse_expr(std::string_view text, std::size_t arity);

// ---------------------------------------------------------------------------
// Folding builders, used by code that generates expressions. They apply
// constant folding and the unit/zero identities (x+0, x*1, x*0, x^1, x^0).
namespace sym {

Expr num(double v);
Expr add(const Expr& a, const Expr& b);
Expr sub(const Expr& a, const Expr& b);
Expr mul(const Expr& a, const Expr& b);
Expr div(const Expr& a, const Expr& b);
Expr neg(const Expr& a);
Expr pow(const Expr& a, unsigned n);
Expr abs(const Expr& a);
Expr sqrt(const Expr& a);
Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr tanh(const Expr& a);
Expr sign(const Expr& a);

}  // namespace sym

// ---------------------------------------------------------------------------
// Symbolic model: f-hat and its gradient over an ordered feature list.

struct SymbolicModel {
  std::vector<std::string> features;
  Expr value;
  /// gradient[i] is the partial derivative with respect to features[i].
  std::vector<Expr> gradient;

  /// Builds the gradient by symbolic differentiation of `value`.
  static SymbolicModel from_value(std::vector<std::string> features, Expr value);
};

/// Replaces every Var named in `bindings` by its bound expression.
Expr substitute_vars(const Expr& e, const std::map<std::string, Expr>& bindings);

/// Replaces f(args) by f-hat and df(v, args) by the v-th partial of f-hat,
/// with the argument expressions substituted for the feature variables.
/// Throws InvalidArgument for an arity mismatch or a df on a feature the
/// model has no gradient for.
Expr substitute_f(const Expr& e, const SymbolicModel& fhat);

/// Symbolic derivative with respect to a variable. d|u|/du is taken as
/// sign(u), with 0 at u = 0; d sqrt(u) is u' / (2 sqrt(u)), which fails at
/// evaluation time when u = 0.
Expr differentiate(const Expr& e, std::string_view wrt);

// ---------------------------------------------------------------------------
// Evaluation

/// Ground expression compiled against an ordered feature list into a flat
/// instruction tape. Shared sub-expressions are evaluated once.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  /// Throws InvalidArgument if `e` is not ground or mentions a variable
  /// outside `features`.
  CompiledExpr(const Expr& e, std::vector<std::string> features);

  const std::vector<std::string>& features() const { return features_; }
  std::size_t size() const { return code_.size(); }

  /// Double-precision evaluation. Throws DomainError on sqrt of a
  /// negative, division by zero or a non-finite intermediate.
  double evaluate(std::span<const double> point) const;

  /// Outward-rounded enclosure of the range over the box. Throws
  /// DomainError (without a box attached) on possible domain violations.
  Interval enclose(std::span<const Interval> box) const;

 private:
  struct Instr {
    Op op;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    unsigned exponent = 0;
    double value = 0.0;
  };
  std::vector<std::string> features_;
  std::vector<Instr> code_;
};

using Env = std::map<std::string, double, std::less<>>;

double eval(const Expr& e, const Env& point);
double eval(const Expr& e, const std::vector<std::string>& features, std::span<const double> point);

/// Enclosure over a box. DomainError carries the box on failure.
Interval eval_interval(const Expr& e, const Box& box);

/// x^n by repeated multiplication; shared by all evaluators so that tree,
/// tape and network evaluation agree bit for bit.
inline double ipow(double x, unsigned n) {
  double r = 1.0;
  for (unsigned i = 0; i < n; ++i) r *= x;
  return r;
}

// ---------------------------------------------------------------------------
// Auxiliary truths

enum class Relation { Equality, GreaterThan };

struct AuxTruth {
  Relation relation = Relation::Equality;
  Expr alpha;
  Expr beta;

  /// Parses "alpha = beta", "alpha > beta" or "alpha < beta" (the last is
  /// stored as beta > alpha). Throws ParseError/InvalidArgument.
  static AuxTruth parse(std::string_view text);
  /// Throws InvalidArgument if neither side mentions f/df or the sides
  /// disagree on f's arity.
  void validate() const;
  std::string to_string() const;
};

}  // namespace lgml
