#include "lgml/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <unordered_map>

#include "lgml/error.hpp"

namespace lgml {

namespace {

std::shared_ptr<Expr::Node> make_node(Op op) {
  auto n = std::make_shared<Expr::Node>();
  n->op = op;
  return n;
}

bool is_unary(Op op) {
  switch (op) {
    case Op::Neg:
    case Op::Abs:
    case Op::Sqrt:
    case Op::Sin:
    case Op::Cos:
    case Op::Tanh:
    case Op::Sign:
      return true;
    default:
      return false;
  }
}

bool is_binary(Op op) {
  return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::Add:
    case Op::Sub:
      return 1;
    case Op::Mul:
    case Op::Div:
      return 2;
    case Op::Pow:
      return 3;
    default:
      return 4;
  }
}

void print(const Expr& e, int min_prec, std::string& out);

void print_args(std::span<const Expr> args, std::string& out) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) out += ", ";
    print(args[i], 0, out);
  }
}

void print(const Expr& e, int min_prec, std::string& out) {
  const bool paren = precedence(e) < min_prec;
  if (paren) out += '(';
  switch (e.op()) {
    case Op::Const:
      if (std::signbit(e.value())) {
        out += '-';
        out += format_number(-e.value());
      } else {
        out += format_number(e.value());
      }
      break;
    case Op::Var:
      out += e.name();
      break;
    case Op::Neg:
      out += '-';
      print(e.child(0), 4, out);
      break;
    case Op::Add:
    case Op::Sub:
      print(e.child(0), 1, out);
      out += e.op() == Op::Add ? " + " : " - ";
      print(e.child(1), 2, out);
      break;
    case Op::Mul:
    case Op::Div:
      print(e.child(0), 2, out);
      out += e.op() == Op::Mul ? " * " : " / ";
      print(e.child(1), 3, out);
      break;
    case Op::Pow:
      print(e.child(0), 4, out);
      out += '^';
      out += std::to_string(e.exponent());
      break;
    case Op::Abs:
    case Op::Sqrt:
    case Op::Sin:
    case Op::Cos:
    case Op::Tanh:
    case Op::Sign:
      out += op_name(e.op());
      out += '(';
      print(e.child(0), 0, out);
      out += ')';
      break;
    case Op::FApp:
      out += "f(";
      print_args(e.children(), out);
      out += ')';
      break;
    case Op::FDeriv:
      out += "df(";
      out += e.name();
      out += ", ";
      print_args(e.children(), out);
      out += ')';
      break;
  }
  if (paren) out += ')';
}

void debug(const Expr& e, std::string& out) {
  switch (e.op()) {
    case Op::Const:
      out += "Const " + format_number(e.value());
      return;
    case Op::Var:
      out += "Var " + e.name();
      return;
    case Op::FApp:
      out += "FApp[";
      print_args(e.children(), out);
      out += ']';
      return;
    case Op::FDeriv:
      out += "FDeriv(" + e.name() + ",[";
      print_args(e.children(), out);
      out += "])";
      return;
    case Op::Pow:
      out += "Pow(";
      debug(e.child(0), out);
      out += "," + std::to_string(e.exponent()) + ")";
      return;
    default:
      break;
  }
  std::string name(op_name(e.op()));
  name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
  out += name + "(";
  for (std::size_t i = 0; i < e.children().size(); ++i) {
    if (i) out += ",";
    debug(e.child(i), out);
  }
  out += ")";
}

// Generic memoized bottom-up rewrite over the DAG.
class Rewriter {
 public:
  using Rule = std::function<std::optional<Expr>(const Expr&, Rewriter&)>;
  explicit Rewriter(Rule rule) : rule_(std::move(rule)) {}

  Expr operator()(const Expr& e) {
    if (auto it = memo_.find(e.id()); it != memo_.end()) return it->second;
    Expr result = [&] {
      if (auto r = rule_(e, *this)) return *r;
      return rebuild(e);
    }();
    memo_.emplace(e.id(), result);
    return result;
  }

 private:
  Expr rebuild(const Expr& e) {
    std::vector<Expr> kids;
    bool changed = false;
    for (const auto& k : e.children()) {
      kids.push_back((*this)(k));
      changed = changed || kids.back().id() != k.id();
    }
    if (!changed) return e;
    switch (e.op()) {
      case Op::Pow:
        return Expr::pow(kids[0], e.exponent());
      case Op::FApp:
        return Expr::fapp(std::move(kids));
      case Op::FDeriv:
        return Expr::fderiv(e.name(), std::move(kids));
      default:
        if (is_unary(e.op())) return Expr::unary(e.op(), kids[0]);
        return Expr::binary(e.op(), kids[0], kids[1]);
    }
  }

  Rule rule_;
  std::unordered_map<const Expr::Node*, Expr> memo_;
};

void collect_arities(const Expr& e, std::optional<std::size_t>& arity) {
  if (e.op() == Op::FApp || e.op() == Op::FDeriv) {
    if (arity && *arity != e.children().size()) {
      throw InvalidArgument("f/df applications disagree on arity (" + std::to_string(*arity) + " vs " +
                            std::to_string(e.children().size()) + ")");
    }
    arity = e.children().size();
  }
  for (const auto& k : e.children()) collect_arities(k, arity);
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Const: return "const";
    case Op::Var: return "var";
    case Op::Neg: return "neg";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Pow: return "pow";
    case Op::Abs: return "abs";
    case Op::Sqrt: return "sqrt";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Tanh: return "tanh";
    case Op::Sign: return "sign";
    case Op::FApp: return "f";
    case Op::FDeriv: return "df";
  }
  return "?";
}

Expr::Expr() : Expr(constant(0.0)) {}

Expr Expr::constant(double value) {
  auto n = make_node(Op::Const);
  n->value = value;
  return Expr(std::move(n));
}

Expr Expr::var(std::string name) {
  auto n = make_node(Op::Var);
  n->name = std::move(name);
  return Expr(std::move(n));
}

Expr Expr::unary(Op op, Expr child) {
  if (!is_unary(op)) throw InvalidArgument(std::string(op_name(op)) + " is not a unary operator");
  auto n = make_node(op);
  n->ground = child.is_ground();
  n->children.push_back(std::move(child));
  return Expr(std::move(n));
}

Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
  if (!is_binary(op)) throw InvalidArgument(std::string(op_name(op)) + " is not a binary operator");
  auto n = make_node(op);
  n->ground = lhs.is_ground() && rhs.is_ground();
  n->children.push_back(std::move(lhs));
  n->children.push_back(std::move(rhs));
  return Expr(std::move(n));
}

Expr Expr::pow(Expr base, unsigned exponent) {
  auto n = make_node(Op::Pow);
  n->exponent = exponent;
  n->ground = base.is_ground();
  n->children.push_back(std::move(base));
  return Expr(std::move(n));
}

Expr Expr::fapp(std::vector<Expr> args) {
  if (args.empty()) throw InvalidArgument("f needs at least one argument");
  auto n = make_node(Op::FApp);
  n->ground = false;
  n->children = std::move(args);
  return Expr(std::move(n));
}

Expr Expr::fderiv(std::string wrt, std::vector<Expr> args) {
  if (args.empty()) throw InvalidArgument("df needs at least one argument");
  auto n = make_node(Op::FDeriv);
  n->ground = false;
  n->name = std::move(wrt);
  n->children = std::move(args);
  return Expr(std::move(n));
}

Op Expr::op() const { return node_->op; }
double Expr::value() const { return node_->value; }
const std::string& Expr::name() const { return node_->name; }
unsigned Expr::exponent() const { return node_->exponent; }
std::span<const Expr> Expr::children() const { return node_->children; }
bool Expr::is_ground() const { return node_->ground; }

bool operator==(const Expr& a, const Expr& b) {
  if (a.id() == b.id()) return true;
  if (a.op() != b.op() || a.children().size() != b.children().size()) return false;
  switch (a.op()) {
    case Op::Const:
      if (!(a.value() == b.value() || (std::isnan(a.value()) && std::isnan(b.value())))) return false;
      break;
    case Op::Var:
    case Op::FDeriv:
      if (a.name() != b.name()) return false;
      break;
    case Op::Pow:
      if (a.exponent() != b.exponent()) return false;
      break;
    default:
      break;
  }
  for (std::size_t i = 0; i < a.children().size(); ++i) {
    if (!(a.child(i) == b.child(i))) return false;
  }
  return true;
}

std::string to_string(const Expr& e) {
  std::string out;
  print(e, 0, out);
  return out;
}

std::string debug_string(const Expr& e) {
  std::string out;
  debug(e, out);
  return out;
}

std::size_t node_count(const Expr& e) {
  std::unordered_map<const Expr::Node*, std::size_t> memo;
  std::function<std::size_t(const Expr&)> count = [&](const Expr& x) -> std::size_t {
    if (auto it = memo.find(x.id()); it != memo.end()) return it->second;
    std::size_t n = 1;
    for (const auto& k : x.children()) n += count(k);
    memo.emplace(x.id(), n);
    return n;
  };
  return count(e);
}

std::size_t dag_size(const Expr& e) {
  std::unordered_map<const Expr::Node*, bool> seen;
  std::function<void(const Expr&)> walk = [&](const Expr& x) {
    if (!seen.emplace(x.id(), true).second) return;
    for (const auto& k : x.children()) walk(k);
  };
  walk(e);
  return seen.size();
}

std::set<std::string> variables(const Expr& e) {
  std::set<std::string> vars;
  std::unordered_map<const Expr::Node*, bool> seen;
  std::function<void(const Expr&)> walk = [&](const Expr& x) {
    if (!seen.emplace(x.id(), true).second) return;
    if (x.op() == Op::Var) vars.insert(x.name());
    for (const auto& k : x.children()) walk(k);
  };
  walk(e);
  return vars;
}

std::optional<std::size_t> f_arity(const Expr& e) {
  std::optional<std::size_t> arity;
  collect_arities(e, arity);
  return arity;
}

bool mentions_f(const Expr& e) { return !e.is_ground(); }

// ---------------------------------------------------------------------------

namespace sym {

Expr num(double v) { return Expr::constant(v); }

Expr add(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const()) return num(a.value() + b.value());
  if (a.is_const(0.0)) return b;
  if (b.is_const(0.0)) return a;
  return Expr::binary(Op::Add, a, b);
}

Expr sub(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const()) return num(a.value() - b.value());
  if (b.is_const(0.0)) return a;
  if (a.is_const(0.0)) return neg(b);
  return Expr::binary(Op::Sub, a, b);
}

Expr mul(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const()) return num(a.value() * b.value());
  if (a.is_const(0.0) || b.is_const(0.0)) return num(0.0);
  if (a.is_const(1.0)) return b;
  if (b.is_const(1.0)) return a;
  return Expr::binary(Op::Mul, a, b);
}

Expr div(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const() && b.value() != 0.0) return num(a.value() / b.value());
  if (b.is_const(1.0)) return a;
  if (a.is_const(0.0) && !b.is_const(0.0)) return num(0.0);
  return Expr::binary(Op::Div, a, b);
}

Expr neg(const Expr& a) {
  if (a.is_const()) return num(-a.value());
  if (a.op() == Op::Neg) return a.child(0);
  return Expr::unary(Op::Neg, a);
}

Expr pow(const Expr& a, unsigned n) {
  if (n == 0) return num(1.0);
  if (n == 1) return a;
  if (a.is_const()) return num(ipow(a.value(), n));
  return Expr::pow(a, n);
}

Expr abs(const Expr& a) {
  if (a.is_const()) return num(std::abs(a.value()));
  return Expr::unary(Op::Abs, a);
}

Expr sqrt(const Expr& a) {
  if (a.is_const() && a.value() >= 0.0) return num(std::sqrt(a.value()));
  return Expr::unary(Op::Sqrt, a);
}

Expr sin(const Expr& a) {
  if (a.is_const()) return num(std::sin(a.value()));
  return Expr::unary(Op::Sin, a);
}

Expr cos(const Expr& a) {
  if (a.is_const()) return num(std::cos(a.value()));
  return Expr::unary(Op::Cos, a);
}

Expr tanh(const Expr& a) {
  if (a.is_const()) return num(std::tanh(a.value()));
  return Expr::unary(Op::Tanh, a);
}

Expr sign(const Expr& a) {
  if (a.is_const()) return num(a.value() > 0.0 ? 1.0 : (a.value() < 0.0 ? -1.0 : 0.0));
  return Expr::unary(Op::Sign, a);
}

}  // namespace sym

// ---------------------------------------------------------------------------

SymbolicModel SymbolicModel::from_value(std::vector<std::string> features, Expr value) {
  SymbolicModel m{std::move(features), std::move(value), {}};
  for (const auto& f : m.features) m.gradient.push_back(differentiate(m.value, f));
  return m;
}

Expr substitute_vars(const Expr& e, const std::map<std::string, Expr>& bindings) {
  Rewriter rw([&](const Expr& x, Rewriter&) -> std::optional<Expr> {
    if (x.op() == Op::Var) {
      if (auto it = bindings.find(x.name()); it != bindings.end()) return it->second;
      return x;
    }
    return std::nullopt;
  });
  return rw(e);
}

Expr substitute_f(const Expr& e, const SymbolicModel& fhat) {
  if (!fhat.value.is_ground()) throw InvalidArgument("f-hat must be ground");
  if (fhat.gradient.size() != 0 && fhat.gradient.size() != fhat.features.size()) {
    throw InvalidArgument("f-hat gradient size does not match its feature count");
  }
  Rewriter rw([&](const Expr& x, Rewriter& self) -> std::optional<Expr> {
    if (x.op() != Op::FApp && x.op() != Op::FDeriv) return std::nullopt;
    if (x.children().size() != fhat.features.size()) {
      throw InvalidArgument(std::string(op_name(x.op())) + " applied to " + std::to_string(x.children().size()) +
                            " argument(s), model has " + std::to_string(fhat.features.size()) + " feature(s)");
    }
    const Expr* body = &fhat.value;
    if (x.op() == Op::FDeriv) {
      const auto it = std::find(fhat.features.begin(), fhat.features.end(), x.name());
      const auto idx = static_cast<std::size_t>(it - fhat.features.begin());
      if (it == fhat.features.end() || idx >= fhat.gradient.size()) {
        throw InvalidArgument("no gradient of f-hat with respect to '" + x.name() + "'");
      }
      body = &fhat.gradient[idx];
      if (!body->is_ground()) throw InvalidArgument("f-hat gradient must be ground");
    }
    std::map<std::string, Expr> bindings;
    bool identity = true;
    for (std::size_t i = 0; i < fhat.features.size(); ++i) {
      Expr arg = self(x.child(i));
      identity = identity && arg.op() == Op::Var && arg.name() == fhat.features[i];
      bindings.emplace(fhat.features[i], std::move(arg));
    }
    if (identity) return *body;
    return substitute_vars(*body, bindings);
  });
  return rw(e);
}

Expr differentiate(const Expr& e, std::string_view wrt) {
  if (!e.is_ground()) throw InvalidArgument("cannot differentiate an expression that mentions f");
  std::unordered_map<const Expr::Node*, Expr> memo;
  std::function<Expr(const Expr&)> d = [&](const Expr& x) -> Expr {
    if (auto it = memo.find(x.id()); it != memo.end()) return it->second;
    using namespace sym;
    Expr r;
    switch (x.op()) {
      case Op::Const:
        r = num(0.0);
        break;
      case Op::Var:
        r = num(x.name() == wrt ? 1.0 : 0.0);
        break;
      case Op::Neg:
        r = neg(d(x.child(0)));
        break;
      case Op::Add:
        r = add(d(x.child(0)), d(x.child(1)));
        break;
      case Op::Sub:
        r = sub(d(x.child(0)), d(x.child(1)));
        break;
      case Op::Mul:
        r = add(mul(d(x.child(0)), x.child(1)), mul(x.child(0), d(x.child(1))));
        break;
      case Op::Div: {
        const Expr& u = x.child(0);
        const Expr& v = x.child(1);
        r = div(sub(mul(d(u), v), mul(u, d(v))), pow(v, 2));
        break;
      }
      case Op::Pow: {
        const unsigned n = x.exponent();
        r = n == 0 ? num(0.0) : mul(mul(num(n), pow(x.child(0), n - 1)), d(x.child(0)));
        break;
      }
      case Op::Abs:
        r = mul(sign(x.child(0)), d(x.child(0)));
        break;
      case Op::Sign:
        r = num(0.0);
        break;
      case Op::Sqrt:
        r = div(d(x.child(0)), mul(num(2.0), x));
        break;
      case Op::Sin:
        r = mul(cos(x.child(0)), d(x.child(0)));
        break;
      case Op::Cos:
        r = mul(neg(sin(x.child(0))), d(x.child(0)));
        break;
      case Op::Tanh:
        r = mul(sub(num(1.0), pow(x, 2)), d(x.child(0)));
        break;
      case Op::FApp:
      case Op::FDeriv:
        throw InvalidArgument("cannot differentiate f");
    }
    memo.emplace(x.id(), r);
    return r;
  };
  return d(e);
}

// ---------------------------------------------------------------------------

AuxTruth AuxTruth::parse(std::string_view text) {
  const auto pos = text.find_first_of("=<>");
  if (pos == std::string_view::npos) throw ParseError("expected '=', '>' or '<' in auxiliary truth", 0);
  if (text.find_first_of("=<>", pos + 1) != std::string_view::npos) {
    throw ParseError("more than one relation in auxiliary truth", text.find_first_of("=<>", pos + 1));
  }
  Expr lhs;
  Expr rhs;
  try {
    lhs = parse_expr(text.substr(0, pos));
  } catch (const ParseError& err) {
    throw ParseError(std::string("left side: ") + err.what(), err.position());
  }
  try {
    rhs = parse_expr(text.substr(pos + 1));
  } catch (const ParseError& err) {
    throw ParseError(std::string("right side: ") + err.what(), err.position() + pos + 1);
  }
  AuxTruth t;
  switch (text[pos]) {
    case '=':
      t = {Relation::Equality, lhs, rhs};
      break;
    case '>':
      t = {Relation::GreaterThan, lhs, rhs};
      break;
    default:
      t = {Relation::GreaterThan, rhs, lhs};
      break;
  }
  t.validate();
  return t;
}

void AuxTruth::validate() const {
  if (!mentions_f(alpha) && !mentions_f(beta)) {
    throw InvalidArgument("auxiliary truth does not mention f or df");
  }
  auto a = f_arity(alpha);
  auto b = f_arity(beta);
  if (a && b && *a != *b) throw InvalidArgument("sides of the auxiliary truth disagree on the arity of f");
}

std::string AuxTruth::to_string() const {
  return lgml::to_string(alpha) + (relation == Relation::Equality ? " = " : " > ") + lgml::to_string(beta);
}

}  // namespace lgml
