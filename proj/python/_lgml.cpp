#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "lgml/bench.hpp"
#include "lgml/error.hpp"
#include "lgml/expr.hpp"
#include "lgml/loop.hpp"
#include "lgml/model.hpp"
#include "lgml/verify.hpp"

namespace py = pybind11;

namespace {

lgml::SymbolicModel as_model(const py::object& model, const lgml::Box& domain) {
  if (py::isinstance<lgml::Mlp>(model)) return lgml::to_expr(model.cast<const lgml::Mlp&>());
  if (py::isinstance<lgml::Expr>(model)) return lgml::SymbolicModel::from_value(domain.names(), model.cast<lgml::Expr>());
  return lgml::SymbolicModel::from_value(domain.names(), lgml::parse_expr(model.cast<std::string>()));
}

lgml::ViolationExpr violation(const py::object& model, const std::string& truth, const std::string& domain) {
  const lgml::Box box = lgml::Box::parse(domain);
  return lgml::build_violation(lgml::AuxTruth::parse(truth), as_model(model, box), box);
}

py::dict point_dict(const lgml::Box& box, const std::vector<double>& x) {
  py::dict d;
  for (std::size_t i = 0; i < x.size(); ++i) d[py::str(box.names()[i])] = x[i];
  return d;
}

lgml::RunConfig make_config(const std::string& experiment, const std::vector<std::string>& overrides) {
  lgml::RunConfig c = lgml::RunConfig::defaults(experiment);
  for (const auto& s : overrides) c.set(s);
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_lgml, m) {
  m.doc() = "Logic guided machine learning core";

  py::register_exception<lgml::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<lgml::ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<lgml::InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<lgml::UnsupportedNodeError>(m, "UnsupportedNodeError", PyExc_RuntimeError);
  py::register_exception<lgml::StalledLoopError>(m, "StalledLoopError", PyExc_RuntimeError);

  py::class_<lgml::Expr>(m, "Expr")
      .def(py::init([](const std::string& text) { return lgml::parse_expr(text); }), py::arg("text"))
      .def("__str__", [](const lgml::Expr& e) { return lgml::to_string(e); })
      .def("__repr__", [](const lgml::Expr& e) { return "Expr('" + lgml::to_string(e) + "')"; })
      .def("__eq__", [](const lgml::Expr& a, const lgml::Expr& b) { return a == b; })
      .def("debug", [](const lgml::Expr& e) { return lgml::debug_string(e); })
      .def("eval", [](const lgml::Expr& e, const std::map<std::string, double>& env) {
        return lgml::eval(e, lgml::Env(env.begin(), env.end()));
      }, py::arg("point"))
      .def("differentiate", [](const lgml::Expr& e, const std::string& wrt) { return lgml::differentiate(e, wrt); },
           py::arg("wrt"))
      .def("variables", [](const lgml::Expr& e) { return lgml::variables(e); })
      .def("node_count", [](const lgml::Expr& e) { return lgml::node_count(e); })
      .def("enclose", [](const lgml::Expr& e, const std::string& box) {
        const lgml::Interval r = lgml::eval_interval(e, lgml::Box::parse(box));
        return py::make_tuple(r.lo, r.hi);
      }, py::arg("box"));

  py::class_<lgml::Mlp>(m, "Mlp")
      .def_static("from_json", &lgml::Mlp::from_json, py::arg("text"))
      .def("to_json", &lgml::Mlp::to_json)
      .def_property_readonly("features", &lgml::Mlp::features)
      .def_property_readonly("parameter_count", &lgml::Mlp::parameter_count)
      .def("predict", [](const lgml::Mlp& net, const std::vector<double>& x) { return net.predict(x); }, py::arg("x"))
      .def("gradient", [](const lgml::Mlp& net, const std::vector<double>& x) { return net.predict_gradient(x); },
           py::arg("x"))
      .def("to_expr", [](const lgml::Mlp& net) {
        const lgml::SymbolicModel s = lgml::to_expr(net);
        return py::make_tuple(s.value, s.gradient);
      });

  m.def("train", [](const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
                    const std::vector<std::string>& features, const std::vector<std::size_t>& hidden,
                    const std::string& activation, std::uint64_t seed, double fit_tol, std::size_t max_epochs) {
    if (xs.size() != ys.size()) throw lgml::InvalidArgument("xs and ys differ in length");
    lgml::Dataset data(features);
    for (std::size_t i = 0; i < xs.size(); ++i) data.add(xs[i], ys[i]);
    lgml::MlpConfig c;
    c.input_dim = features.size();
    c.hidden = hidden;
    c.activation = lgml::parse_activation(activation);
    c.seed = seed;
    c.fit_tol = fit_tol;
    c.max_epochs = max_epochs;
    lgml::FitResult r;
    {
      py::gil_scoped_release release;
      r = lgml::train(c, data);
    }
    py::dict out;
    out["model"] = r.model;
    out["max_residual"] = r.max_residual;
    out["underfit"] = r.underfit;
    out["epochs"] = r.epochs;
    return out;
  }, py::arg("xs"), py::arg("ys"), py::arg("features"), py::arg("hidden") = std::vector<std::size_t>{3, 3},
     py::arg("activation") = "tanh", py::arg("seed") = 0, py::arg("fit_tol") = 1e-3, py::arg("max_epochs") = 200000);

  m.def("check", [](const py::object& model, const std::string& truth, const std::string& domain, double eps) {
    const lgml::ViolationExpr v = violation(model, truth, domain);
    const lgml::VerifyOutcome o = lgml::check(v, eps);
    py::dict out;
    if (const auto* s = std::get_if<lgml::Sat>(&o)) {
      out["result"] = "sat";
      out["witness"] = point_dict(v.domain, s->witness);
      out["violation"] = s->violation;
    } else {
      out["result"] = "unsat";
      out["certified_upper_bound"] = std::get<lgml::Unsat>(o).certified_upper_bound;
    }
    return out;
  }, py::arg("model"), py::arg("truth"), py::arg("domain"), py::arg("eps"));

  m.def("verify", [](const py::object& model, const std::string& truth, const std::string& domain, double rho,
                     double bisection_tol) {
    const lgml::ViolationExpr v = violation(model, truth, domain);
    lgml::EpsStarOptions opts;
    opts.rho = rho;
    opts.bisection_tol = bisection_tol;
    const lgml::EpsStarOutcome o = lgml::find_eps_star(v, lgml::Backend{}, opts);
    py::dict out;
    if (const auto* p = std::get_if<lgml::Proof>(&o)) {
      out["result"] = "proof";
      out["certified_upper_bound"] = p->certified_upper_bound;
    } else {
      const auto& r = std::get<lgml::EpsStarResult>(o);
      out["result"] = "counterexample";
      out["eps_star"] = r.eps_star;
      out["strongest_point"] = point_dict(v.domain, r.strongest_point);
      out["violation"] = r.strongest_violation;
    }
    return out;
  }, py::arg("model"), py::arg("truth"), py::arg("domain"), py::arg("rho") = 1e-2, py::arg("bisection_tol") = 1e-3);

  m.def("emit_smt", [](const py::object& model, const std::string& truth, const std::string& domain, double eps,
                       const std::string& encoding) {
    lgml::SmtEncoding enc;
    if (encoding == "real") {
      enc = lgml::SmtEncoding::Real;
    } else if (encoding == "float16") {
      enc = lgml::SmtEncoding::Float16;
    } else {
      throw lgml::InvalidArgument("encoding must be real or float16");
    }
    return lgml::emit_smtlib(violation(model, truth, domain), eps, enc);
  }, py::arg("model"), py::arg("truth"), py::arg("domain"), py::arg("eps"), py::arg("encoding") = "real");

  m.def("default_config", [](const std::string& experiment, const std::vector<std::string>& overrides) {
    return make_config(experiment, overrides).to_json();
  }, py::arg("experiment"), py::arg("overrides") = std::vector<std::string>{});

  m.def("run_experiment", [](const std::string& experiment, const std::vector<std::string>& overrides) {
    const lgml::RunConfig c = make_config(experiment, overrides);
    lgml::ExperimentRun r;
    {
      py::gil_scoped_release release;
      r = lgml::run_experiment(c);
    }
    const std::string model = r.result.trace.empty() ? std::string() : r.result.final_model.to_json();
    return py::make_tuple(r.report.to_json(), model);
  }, py::arg("experiment"), py::arg("overrides") = std::vector<std::string>{});

  m.def("run_baseline", [](const std::string& experiment, const std::vector<std::string>& overrides) {
    const lgml::RunConfig c = make_config(experiment, overrides);
    std::vector<lgml::BaselinePoint> curve;
    {
      py::gil_scoped_release release;
      curve = lgml::run_baseline(c);
    }
    py::list out;
    for (const auto& p : curve) out.append(py::make_tuple(p.size, p.rmse));
    return out;
  }, py::arg("experiment"), py::arg("overrides") = std::vector<std::string>{});
}
