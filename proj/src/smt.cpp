#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

#include "lgml/error.hpp"
#include "lgml/verify.hpp"

namespace lgml {

namespace {

// ---------------------------------------------------------------------------
// Terms

bool is_reserved(const std::string& s) {
  static const std::set<std::string> words{"and", "or", "not", "ite", "let", "true", "false", "distinct", "abs",
                                           "div", "mod", "assert", "exists", "forall", "par", "_", "!", "as"};
  return words.count(s) > 0;
}

std::string symbol(const std::string& name) { return is_reserved(name) ? "|" + name + "|" : name; }

// Decimal literal for a non-negative double: integers as numerals, other
// values in the shortest round-trip fixed notation.
std::string real_literal_abs(double v) {
  char buf[1100];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
  (void)ec;
  return std::string(buf, ptr);
}

std::string real_literal(double v) {
  if (std::signbit(v) && v != 0.0) return "(- " + real_literal_abs(-v) + ")";
  return real_literal_abs(std::abs(v));
}

std::string half_literal(std::uint16_t bits) {
  auto bin = [](unsigned value, int width) {
    std::string s;
    for (int i = width - 1; i >= 0; --i) s += ((value >> i) & 1U) ? '1' : '0';
    return s;
  };
  return "(fp #b" + bin(bits >> 15, 1) + " #b" + bin((bits >> 10) & 0x1FU, 5) + " #b" + bin(bits & 0x3FFU, 10) + ")";
}

class Emitter {
 public:
  Emitter(const ViolationExpr& v, SmtEncoding enc) : v_(v), enc_(enc) {}

  std::string run(double eps) {
    std::set<std::string> unsupported;
    count_uses(v_.v, unsupported);
    if (!unsupported.empty()) throw UnsupportedNodeError({unsupported.begin(), unsupported.end()});

    const bool fp = enc_ == SmtEncoding::Float16;
    std::string out;
    out += fp ? "(set-logic QF_FP)\n" : "(set-logic QF_NRA)\n";
    for (const auto& name : v_.domain.names()) {
      out += "(declare-fun " + symbol(name) + " () " + (fp ? "(_ FloatingPoint 5 11)" : "Real") + ")\n";
    }

    // Shared non-leaf nodes become let bindings, innermost dependencies first.
    std::string body = term(v_.v, true);
    std::string goal = fp ? "(fp.gt " + body + " " + constant(eps) + ")" : "(> " + body + " " + constant(eps) + ")";
    for (auto it = bindings_.rbegin(); it != bindings_.rend(); ++it) {
      goal = "(let ((" + it->first + " " + it->second + ")) " + goal + ")";
    }

    std::string conj = "(and";
    for (std::size_t i = 0; i < v_.domain.size(); ++i) {
      const auto name = symbol(v_.domain.names()[i]);
      const auto& r = v_.domain[i];
      if (fp) {
        conj += " (fp.leq " + half_literal(to_half_bits(r.lo, "RTP")) + " " + name + ")";
        conj += " (fp.leq " + name + " " + half_literal(to_half_bits(r.hi, "RTN")) + ")";
      } else {
        conj += " (<= " + real_literal(r.lo) + " " + name + ")";
        conj += " (<= " + name + " " + real_literal(r.hi) + ")";
      }
    }
    conj += " " + goal + ")";
    out += "(assert " + conj + ")\n";
    out += "(check-sat)\n(get-model)\n";
    return out;
  }

 private:
  void count_uses(const Expr& e, std::set<std::string>& unsupported) {
    if (++uses_[e.id()] > 1) return;
    switch (e.op()) {
      case Op::Tanh:
      case Op::Sin:
      case Op::Cos:
      case Op::Sqrt:
      case Op::FApp:
      case Op::FDeriv:
        unsupported.insert(std::string(op_name(e.op())));
        break;
      default:
        break;
    }
    for (const auto& k : e.children()) count_uses(k, unsupported);
  }

  std::string constant(double c) const {
    return enc_ == SmtEncoding::Float16 ? half_literal(to_half_bits(c, "RNE")) : real_literal(c);
  }

  std::string term(const Expr& e, bool root = false) {
    if (e.op() == Op::Const) return constant(e.value());
    if (e.op() == Op::Var) return symbol(e.name());
    if (auto it = names_.find(e.id()); it != names_.end()) return it->second;
    std::string t = compose(e);
    if (!root && uses_[e.id()] > 1) {
      std::string name = "_s" + std::to_string(bindings_.size());
      bindings_.emplace_back(name, std::move(t));
      names_.emplace(e.id(), name);
      return name;
    }
    return t;
  }

  std::string compose(const Expr& e) {
    const bool fp = enc_ == SmtEncoding::Float16;
    auto bin = [&](const char* real_op, const char* fp_op) {
      const std::string a = term(e.child(0));
      const std::string b = term(e.child(1));
      return fp ? "(" + std::string(fp_op) + " RNE " + a + " " + b + ")" : "(" + std::string(real_op) + " " + a + " " + b + ")";
    };
    switch (e.op()) {
      case Op::Neg:
        return fp ? "(fp.neg " + term(e.child(0)) + ")" : "(- " + term(e.child(0)) + ")";
      case Op::Add:
        return bin("+", "fp.add");
      case Op::Sub:
        return bin("-", "fp.sub");
      case Op::Mul:
        return bin("*", "fp.mul");
      case Op::Div:
        return bin("/", "fp.div");
      case Op::Pow: {
        const unsigned n = e.exponent();
        if (n == 0) return constant(1.0);
        const std::string base = term(e.child(0));
        if (n == 1) return base;
        if (!fp) {
          std::string s = "(*";
          for (unsigned i = 0; i < n; ++i) s += " " + base;
          return s + ")";
        }
        // Left-to-right product, matching ipow().
        std::string s = base;
        for (unsigned i = 1; i < n; ++i) s = "(fp.mul RNE " + s + " " + base + ")";
        return s;
      }
      case Op::Abs: {
        const std::string a = term(e.child(0));
        return fp ? "(fp.abs " + a + ")" : "(ite (>= " + a + " 0) " + a + " (- " + a + "))";
      }
      case Op::Sign: {
        const std::string a = term(e.child(0));
        if (fp) {
          const std::string zero = constant(0.0);
          return "(ite (fp.gt " + a + " " + zero + ") " + constant(1.0) + " (ite (fp.lt " + a + " " + zero + ") " +
                 constant(-1.0) + " " + zero + "))";
        }
        return "(ite (> " + a + " 0) 1 (ite (< " + a + " 0) (- 1) 0))";
      }
      default:
        throw UnsupportedNodeError({std::string(op_name(e.op()))});
    }
  }

  const ViolationExpr& v_;
  SmtEncoding enc_;
  std::unordered_map<const Expr::Node*, int> uses_;
  std::unordered_map<const Expr::Node*, std::string> names_;
  std::vector<std::pair<std::string, std::string>> bindings_;
};

// ---------------------------------------------------------------------------
// Solver output

struct SExpr {
  std::string atom;
  std::vector<SExpr> list;
  bool is_list = false;
};

class SExprReader {
 public:
  explicit SExprReader(std::string_view text) : text_(text) {}

  bool at_end() {
    skip();
    return pos_ >= text_.size();
  }

  SExpr read() {
    skip();
    if (pos_ >= text_.size()) malformed("unexpected end of solver output");
    if (text_[pos_] == '(') {
      ++pos_;
      SExpr e;
      e.is_list = true;
      for (;;) {
        skip();
        if (pos_ >= text_.size()) malformed("unbalanced parentheses in solver output");
        if (text_[pos_] == ')') {
          ++pos_;
          return e;
        }
        e.list.push_back(read());
      }
    }
    if (text_[pos_] == ')') malformed("unexpected ')' in solver output");
    if (text_[pos_] == '"') {
      const auto end = text_.find('"', pos_ + 1);
      if (end == std::string_view::npos) malformed("unterminated string in solver output");
      SExpr e{std::string(text_.substr(pos_, end - pos_ + 1)), {}, false};
      pos_ = end + 1;
      return e;
    }
    if (text_[pos_] == '|') {
      const auto end = text_.find('|', pos_ + 1);
      if (end == std::string_view::npos) malformed("unterminated symbol in solver output");
      SExpr e{std::string(text_.substr(pos_ + 1, end - pos_ - 1)), {}, false};
      pos_ = end + 1;
      return e;
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '(' &&
           text_[pos_] != ')') {
      ++pos_;
    }
    return {std::string(text_.substr(start, pos_ - start)), {}, false};
  }

  [[noreturn]] static void malformed(const std::string& msg) {
    throw SolverError(SolverError::Kind::MalformedModel, msg);
  }

 private:
  void skip() {
    while (pos_ < text_.size()) {
      if (std::isspace(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
      } else if (text_[pos_] == ';') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

double parse_real_atom(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) SExprReader::malformed("cannot read model value '" + s + "'");
  return v;
}

unsigned parse_bits(const std::string& s) {
  if (s.size() < 3 || s[0] != '#' || s[1] != 'b') SExprReader::malformed("expected a #b bit-vector, got '" + s + "'");
  unsigned v = 0;
  for (std::size_t i = 2; i < s.size(); ++i) {
    if (s[i] != '0' && s[i] != '1') SExprReader::malformed("bad bit-vector '" + s + "'");
    v = (v << 1) | static_cast<unsigned>(s[i] - '0');
  }
  return v;
}

double model_value(const SExpr& e) {
  if (!e.is_list) return parse_real_atom(e.atom);
  if (e.list.empty() || e.list[0].is_list) SExprReader::malformed("unsupported model value");
  const std::string& head = e.list[0].atom;
  if (head == "-" && e.list.size() == 2) return -model_value(e.list[1]);
  if (head == "-" && e.list.size() == 3) return model_value(e.list[1]) - model_value(e.list[2]);
  if (head == "/" && e.list.size() == 3) return model_value(e.list[1]) / model_value(e.list[2]);
  if (head == "fp" && e.list.size() == 4) {
    const unsigned sign = parse_bits(e.list[1].atom);
    const unsigned exp = parse_bits(e.list[2].atom);
    const unsigned mant = parse_bits(e.list[3].atom);
    return half_bits_to_double(static_cast<std::uint16_t>((sign << 15) | (exp << 10) | mant));
  }
  if (head == "_" && e.list.size() >= 2) {
    if (e.list[1].atom == "+zero") return 0.0;
    if (e.list[1].atom == "-zero") return -0.0;
  }
  SExprReader::malformed("unsupported model value with head '" + head + "'");
}

std::map<std::string, double> parse_model(std::string_view text) {
  SExprReader reader(text);
  std::map<std::string, double> values;
  std::function<void(const SExpr&)> walk = [&](const SExpr& e) {
    if (!e.is_list) return;
    if (!e.list.empty() && !e.list[0].is_list && e.list[0].atom == "define-fun") {
      if (e.list.size() != 5) SExprReader::malformed("malformed define-fun in model");
      values[e.list[1].atom] = model_value(e.list[4]);
      return;
    }
    for (const auto& k : e.list) walk(k);
  };
  while (!reader.at_end()) walk(reader.read());
  return values;
}

// ---------------------------------------------------------------------------
// Subprocess

struct ProcessResult {
  std::string out;
  int status = 0;
};

ProcessResult run_process(const std::string& command, const std::string& input, double timeout_seconds) {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) {
    throw SolverError(SolverError::Kind::LaunchFailure, std::string("pipe: ") + std::strerror(errno));
  }
  const pid_t pid = fork();
  if (pid < 0) throw SolverError(SolverError::Kind::LaunchFailure, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);

  // The child may exit without draining its input.
  struct sigaction ignore {};
  struct sigaction previous {};
  ignore.sa_handler = SIG_IGN;
  sigaction(SIGPIPE, &ignore, &previous);

  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                             std::chrono::duration<double>(timeout_seconds));
  std::size_t written = 0;
  int write_fd = in_pipe[1];
  if (input.empty()) {
    close(write_fd);
    write_fd = -1;
  }
  ProcessResult result;
  bool open_out = true;
  bool timed_out = false;
  while (open_out) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd fds[2];
    nfds_t n = 0;
    fds[n++] = {out_pipe[0], POLLIN, 0};
    if (write_fd >= 0) fds[n++] = {write_fd, POLLOUT, 0};
    const int ready = poll(fds, n, static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (write_fd >= 0 && n > 1 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t k = write(write_fd, input.data() + written, input.size() - written);
      if (k > 0) written += static_cast<std::size_t>(k);
      if (k < 0 || written == input.size()) {
        close(write_fd);
        write_fd = -1;
      }
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      char buf[4096];
      const ssize_t k = read(out_pipe[0], buf, sizeof buf);
      if (k > 0) {
        result.out.append(buf, static_cast<std::size_t>(k));
      } else if (k == 0 || errno != EINTR) {
        open_out = false;
      }
    }
  }
  if (write_fd >= 0) close(write_fd);
  close(out_pipe[0]);
  if (timed_out) {
    kill(pid, SIGKILL);
    waitpid(pid, &result.status, 0);
    sigaction(SIGPIPE, &previous, nullptr);
    throw SolverError(SolverError::Kind::Timeout, "solver timed out after " + std::to_string(timeout_seconds) + " s");
  }
  waitpid(pid, &result.status, 0);
  sigaction(SIGPIPE, &previous, nullptr);
  return result;
}

}  // namespace

std::string emit_smtlib(const ViolationExpr& v, double eps, SmtEncoding encoding) {
  if (v.relation == Relation::Equality && eps < 0.0) {
    throw InvalidArgument("eps must be non-negative for an equality truth");
  }
  if (!v.v.is_ground()) throw InvalidArgument("violation expression must be ground");
  return Emitter(v, encoding).run(eps);
}

VerifyOutcome check_external(const std::string& script, const ViolationExpr& v, double eps,
                             const std::string& solver_command, double timeout_seconds) {
  if (solver_command.empty()) throw SolverError(SolverError::Kind::LaunchFailure, "no solver command configured");
  const ProcessResult proc = run_process(solver_command, script, timeout_seconds);

  SExprReader reader(proc.out);
  std::string verdict;
  if (!reader.at_end()) {
    SExpr first = reader.read();
    if (!first.is_list) verdict = first.atom;
  }
  const bool exited = WIFEXITED(proc.status);
  const int code = exited ? WEXITSTATUS(proc.status) : -1;
  if (verdict == "unsat") return Unsat{eps};
  if (verdict == "unknown") throw SolverError(SolverError::Kind::Unknown, "solver answered unknown");
  if (verdict != "sat") {
    if (!exited || code != 0) {
      throw SolverError(SolverError::Kind::ExitFailure, "solver exited with status " + std::to_string(code) +
                                                            (exited ? "" : " (signalled)"));
    }
    throw SolverError(SolverError::Kind::MalformedModel, "solver printed no verdict");
  }
  const auto model = parse_model(std::string_view(proc.out).substr(proc.out.find("sat") + 3));
  std::vector<double> witness;
  for (const auto& name : v.domain.names()) {
    auto it = model.find(name);
    if (it == model.end()) SExprReader::malformed("model has no value for '" + name + "'");
    witness.push_back(it->second);
  }
  if (!v.domain.contains(witness)) {
    throw SolverError(SolverError::Kind::SpuriousWitness, "solver model lies outside the domain");
  }
  double violation = 0.0;
  try {
    violation = eval(v.v, v.domain.names(), witness);
  } catch (const DomainError& err) {
    throw SolverError(SolverError::Kind::SpuriousWitness, std::string("solver model not evaluable: ") + err.what());
  }
  if (!(violation > eps)) {
    throw SolverError(SolverError::Kind::SpuriousWitness,
                      "solver model re-evaluates to " + std::to_string(violation) + " <= eps");
  }
  return Sat{std::move(witness), violation};
}

// ---------------------------------------------------------------------------

std::uint16_t to_half_bits(double x, std::string_view mode) {
  if (mode != "RNE" && mode != "RTP" && mode != "RTN" && mode != "RTZ") {
    throw InvalidArgument("unknown rounding mode '" + std::string(mode) + "'");
  }
  const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
  if (std::isnan(x)) return 0x7E00;
  const double a = std::abs(x);
  // Rounding away from zero in magnitude?
  const bool toward_pos = mode == "RTP";
  const bool toward_neg = mode == "RTN";
  const bool away_directed = (sign == 0 && toward_pos) || (sign != 0 && toward_neg);
  const bool zero_directed = mode == "RTZ" || (sign == 0 && toward_neg) || (sign != 0 && toward_pos);
  if (std::isinf(a)) return static_cast<std::uint16_t>(sign | 0x7C00);
  if (a == 0.0) return sign;

  int e2 = 0;
  std::frexp(a, &e2);  // a = m * 2^e2, m in [0.5, 1)
  int exponent = e2 - 1;
  if (exponent < -14) exponent = -14;
  const double quantum = std::ldexp(1.0, exponent - 10);
  const double q = a / quantum;  // exact: power-of-two scaling
  double n = std::floor(q);
  const double frac = q - n;
  if (frac > 0.0) {
    if (away_directed) {
      n += 1.0;
    } else if (!zero_directed) {
      if (frac > 0.5 || (frac == 0.5 && std::fmod(n, 2.0) != 0.0)) n += 1.0;
    }
  }
  std::uint32_t bits = 0;
  if (e2 - 1 < -14) {
    bits = static_cast<std::uint32_t>(n);  // subnormal; n == 1024 is the smallest normal
  } else {
    bits = (static_cast<std::uint32_t>(exponent + 15) << 10) + static_cast<std::uint32_t>(n) - 1024U;
  }
  if (bits >= 0x7C00) bits = zero_directed ? 0x7BFF : 0x7C00;
  return static_cast<std::uint16_t>(sign | bits);
}

double half_bits_to_double(std::uint16_t bits) {
  const double sign = (bits & 0x8000) ? -1.0 : 1.0;
  const int exp = (bits >> 10) & 0x1F;
  const int mant = bits & 0x3FF;
  if (exp == 0) return sign * std::ldexp(static_cast<double>(mant), -24);
  if (exp == 31) return mant ? std::numeric_limits<double>::quiet_NaN() : sign * std::numeric_limits<double>::infinity();
  return sign * std::ldexp(static_cast<double>(mant + 1024), exp - 25);
}

}  // namespace lgml
