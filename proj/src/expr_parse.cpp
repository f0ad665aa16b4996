#include <cctype>
#include <charconv>
#include <cstdlib>
#include <limits>

#include "lgml/error.hpp"
#include "lgml/expr.hpp"

namespace lgml {

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

Op function_op(std::string_view name) {
  if (name == "abs") return Op::Abs;
  if (name == "sqrt") return Op::Sqrt;
  if (name == "sin") return Op::Sin;
  if (name == "cos") return Op::Cos;
  if (name == "tanh") return Op::Tanh;
  if (name == "sign") return Op::Sign;
  return Op::Const;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr parse() {
    Expr e = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& message) const { throw ParseError(message, pos_); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      fail(pos_ < text_.size() ? "expected '" + std::string(1, c) + "' but found '" + text_[pos_] + "'"
                               : "expected '" + std::string(1, c) + "' but reached end of input");
    }
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = Expr::binary(Op::Add, lhs, term());
      } else if (accept('-')) {
        lhs = Expr::binary(Op::Sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  Expr term() {
    Expr lhs = factor();
    for (;;) {
      if (accept('*')) {
        lhs = Expr::binary(Op::Mul, lhs, factor());
      } else if (accept('/')) {
        lhs = Expr::binary(Op::Div, lhs, factor());
      } else {
        return lhs;
      }
    }
  }

  Expr factor() {
    Expr b = base();
    if (accept('^')) {
      skip_ws();
      const std::size_t start = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      if (start == pos_) fail("expected a non-negative integer exponent");
      unsigned n = 0;
      auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, n);
      if (ec != std::errc() || n > 64) {
        pos_ = start;
        fail("exponent out of range (0..64)");
      }
      (void)ptr;
      return Expr::pow(b, n);
    }
    return b;
  }

  std::string ident() {
    skip_ws();
    const std::size_t start = pos_;
    if (pos_ >= text_.size() || !is_ident_start(text_[pos_])) fail("expected an identifier");
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  std::vector<Expr> args() {
    std::vector<Expr> out;
    out.push_back(expr());
    while (accept(',')) out.push_back(expr());
    expect(')');
    return out;
  }

  Expr number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
      if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        pos_ = p;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      }
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (ec != std::errc() || ptr != text_.data() + pos_ || !std::isfinite(v)) {
      pos_ = start;
      fail("invalid number");
    }
    return Expr::constant(v);
  }

  Expr base() {
    const char c = peek();
    if (c == '\0') fail("unexpected end of input");
    if (c == '-') {
      ++pos_;
      return Expr::unary(Op::Neg, base());
    }
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (!is_ident_start(c)) fail("unexpected '" + std::string(1, c) + "'");

    const std::size_t start = pos_;
    std::string name = ident();
    const bool call = peek() == '(';
    if (name == "f" || name == "df") {
      if (!call) {
        pos_ = start;
        fail("'" + name + "' is reserved for the unknown function and must be applied");
      }
      ++pos_;
      if (name == "f") return Expr::fapp(args());
      std::string wrt = ident();
      expect(',');
      return Expr::fderiv(std::move(wrt), args());
    }
    if (Op op = function_op(name); op != Op::Const) {
      if (!call) {
        pos_ = start;
        fail("'" + name + "' is a function and must be applied");
      }
      ++pos_;
      Expr arg = expr();
      expect(')');
      return Expr::unary(op, std::move(arg));
    }
    if (call) {
      pos_ = start;
      fail("unknown function '" + name + "'");
    }
    return Expr::var(std::move(name));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expr(std::string_view text) {
  Expr e = Parser(text).parse();
  try {
    f_arity(e);
  } catch (const InvalidArgument& err) {
    throw ParseError(std::string("arity mismatch: ") + err.what(), 0);
  }
  return e;
}

Expr parse_expr(std::string_view text, std::size_t arity) {
  Expr e = parse_expr(text);
  if (auto a = f_arity(e); a && *a != arity) {
    throw ParseError("arity mismatch: f/df applied to " + std::to_string(*a) + " argument(s), expected " +
                         std::to_string(arity),
                     0);
  }
  return e;
}

}  // namespace lgml
