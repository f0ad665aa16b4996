#include <cmath>
#include <functional>
#include <unordered_map>

#include "lgml/error.hpp"
#include "lgml/expr.hpp"

namespace lgml {

namespace {

double checked(double v, Op op) {
  if (!std::isfinite(v)) throw DomainError(std::string("non-finite result in ") + std::string(op_name(op)));
  return v;
}

Interval checked(const Interval& v, Op op) {
  if (!v.valid()) throw DomainError(std::string("unbounded enclosure in ") + std::string(op_name(op)));
  return v;
}

}  // namespace

CompiledExpr::CompiledExpr(const Expr& e, std::vector<std::string> features) : features_(std::move(features)) {
  if (!e.is_ground()) throw InvalidArgument("expression mentions f and cannot be evaluated: " + to_string(e));
  std::unordered_map<const Expr::Node*, std::uint32_t> slot;
  std::function<std::uint32_t(const Expr&)> emit = [&](const Expr& x) -> std::uint32_t {
    if (auto it = slot.find(x.id()); it != slot.end()) return it->second;
    Instr ins{x.op()};
    switch (x.op()) {
      case Op::Const:
        ins.value = x.value();
        break;
      case Op::Var: {
        auto it = std::find(features_.begin(), features_.end(), x.name());
        if (it == features_.end()) throw InvalidArgument("unbound variable '" + x.name() + "'");
        ins.a = static_cast<std::uint32_t>(it - features_.begin());
        break;
      }
      case Op::Pow:
        ins.a = emit(x.child(0));
        ins.exponent = x.exponent();
        break;
      default:
        ins.a = emit(x.child(0));
        if (x.children().size() > 1) ins.b = emit(x.child(1));
        break;
    }
    code_.push_back(ins);
    const auto index = static_cast<std::uint32_t>(code_.size() - 1);
    slot.emplace(x.id(), index);
    return index;
  };
  emit(e);
}

double CompiledExpr::evaluate(std::span<const double> point) const {
  if (point.size() != features_.size()) {
    throw InvalidArgument("point has " + std::to_string(point.size()) + " coordinates, expected " +
                          std::to_string(features_.size()));
  }
  std::vector<double> r(code_.size());
  for (std::size_t i = 0; i < code_.size(); ++i) {
    const Instr& ins = code_[i];
    switch (ins.op) {
      case Op::Const:
        r[i] = ins.value;
        break;
      case Op::Var:
        r[i] = point[ins.a];
        break;
      case Op::Neg:
        r[i] = -r[ins.a];
        break;
      case Op::Add:
        r[i] = checked(r[ins.a] + r[ins.b], ins.op);
        break;
      case Op::Sub:
        r[i] = checked(r[ins.a] - r[ins.b], ins.op);
        break;
      case Op::Mul:
        r[i] = checked(r[ins.a] * r[ins.b], ins.op);
        break;
      case Op::Div:
        if (r[ins.b] == 0.0) throw DomainError("division by zero");
        r[i] = checked(r[ins.a] / r[ins.b], ins.op);
        break;
      case Op::Pow:
        r[i] = checked(ipow(r[ins.a], ins.exponent), ins.op);
        break;
      case Op::Abs:
        r[i] = std::abs(r[ins.a]);
        break;
      case Op::Sqrt:
        if (r[ins.a] < 0.0) throw DomainError("sqrt of a negative value");
        r[i] = std::sqrt(r[ins.a]);
        break;
      case Op::Sin:
        r[i] = std::sin(r[ins.a]);
        break;
      case Op::Cos:
        r[i] = std::cos(r[ins.a]);
        break;
      case Op::Tanh:
        r[i] = std::tanh(r[ins.a]);
        break;
      case Op::Sign:
        r[i] = r[ins.a] > 0.0 ? 1.0 : (r[ins.a] < 0.0 ? -1.0 : 0.0);
        break;
      case Op::FApp:
      case Op::FDeriv:
        throw InvalidArgument("f in compiled expression");
    }
  }
  return r.back();
}

Interval CompiledExpr::enclose(std::span<const Interval> box) const {
  if (box.size() != features_.size()) {
    throw InvalidArgument("box has " + std::to_string(box.size()) + " dimensions, expected " +
                          std::to_string(features_.size()));
  }
  std::vector<Interval> r(code_.size());
  for (std::size_t i = 0; i < code_.size(); ++i) {
    const Instr& ins = code_[i];
    switch (ins.op) {
      case Op::Const:
        r[i] = Interval::point(ins.value);
        break;
      case Op::Var:
        r[i] = box[ins.a];
        break;
      case Op::Neg:
        r[i] = -r[ins.a];
        break;
      case Op::Add:
        r[i] = checked(r[ins.a] + r[ins.b], ins.op);
        break;
      case Op::Sub:
        r[i] = checked(r[ins.a] - r[ins.b], ins.op);
        break;
      case Op::Mul:
        r[i] = checked(r[ins.a] * r[ins.b], ins.op);
        break;
      case Op::Div:
        if (r[ins.b].contains(0.0)) throw DomainError("possible division by zero");
        r[i] = checked(r[ins.a] / r[ins.b], ins.op);
        break;
      case Op::Pow:
        r[i] = checked(ipow(r[ins.a], ins.exponent), ins.op);
        break;
      case Op::Abs:
        r[i] = abs(r[ins.a]);
        break;
      case Op::Sqrt:
        if (r[ins.a].lo < 0.0) throw DomainError("possible sqrt of a negative value");
        r[i] = checked(sqrt(r[ins.a]), ins.op);
        break;
      case Op::Sin:
        r[i] = sin(r[ins.a]);
        break;
      case Op::Cos:
        r[i] = cos(r[ins.a]);
        break;
      case Op::Tanh:
        r[i] = tanh(r[ins.a]);
        break;
      case Op::Sign: {
        const auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
        r[i] = {sgn(r[ins.a].lo), sgn(r[ins.a].hi)};
        break;
      }
      case Op::FApp:
      case Op::FDeriv:
        throw InvalidArgument("f in compiled expression");
    }
  }
  return r.back();
}

double eval(const Expr& e, const Env& point) {
  std::vector<std::string> names;
  std::vector<double> values;
  for (const auto& [k, v] : point) {
    names.push_back(k);
    values.push_back(v);
  }
  return CompiledExpr(e, std::move(names)).evaluate(values);
}

double eval(const Expr& e, const std::vector<std::string>& features, std::span<const double> point) {
  return CompiledExpr(e, features).evaluate(point);
}

Interval eval_interval(const Expr& e, const Box& box) {
  CompiledExpr c(e, box.names());
  try {
    return c.enclose(box.ranges());
  } catch (const DomainError& err) {
    throw DomainError(err.what(), box);
  }
}

}  // namespace lgml
