#include "lgml/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <thread>

#include "json.hpp"
#include "lgml/error.hpp"

namespace lgml {

using nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// --- RunConfig fields -------------------------------------------------------

[[noreturn]] void bad_value(const std::string& key, const json& v, const char* want) {
  throw InvalidArgument("config key '" + key + "': expected " + want + ", got " + v.dump());
}

double get_real(const std::string& key, const json& v) {
  if (!v.is_number()) bad_value(key, v, "a number");
  return v.get<double>();
}

std::uint64_t get_count(const std::string& key, const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
  }
  bad_value(key, v, "a non-negative integer");
}

bool get_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) bad_value(key, v, "true or false");
  return v.get<bool>();
}

std::string get_string(const std::string& key, const json& v) {
  if (!v.is_string()) bad_value(key, v, "a string");
  return v.get<std::string>();
}

std::vector<std::size_t> get_counts(const std::string& key, const json& v) {
  if (!v.is_array()) bad_value(key, v, "an array of non-negative integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) out.push_back(get_count(key, e));
  return out;
}

using Setter = std::function<void(RunConfig&, const json&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
#define LGML_REAL(k, field) t[k] = [](RunConfig& c, const json& v) { c.field = get_real(k, v); }
#define LGML_COUNT(k, field) t[k] = [](RunConfig& c, const json& v) { c.field = get_count(k, v); }
#define LGML_STRING(k, field) t[k] = [](RunConfig& c, const json& v) { c.field = get_string(k, v); }
    LGML_STRING("output", output);
    LGML_COUNT("seed", seed);
    LGML_REAL("rho", rho);
    LGML_REAL("bisection_tol", bisection_tol);
    LGML_COUNT("max_iterations", max_iterations);
    LGML_COUNT("initial_count", initial_count);
    LGML_REAL("separation", separation);
    LGML_STRING("truth", truth);
    LGML_STRING("oracle", oracle);
    LGML_STRING("domain", domain);
    LGML_STRING("backend", backend);
    LGML_STRING("solver", solver);
    LGML_STRING("smt_encoding", smt_encoding);
    LGML_REAL("solver_timeout", solver_timeout);
    LGML_STRING("eps_search", eps_search);
    LGML_COUNT("test_points", test_points);
    LGML_COUNT("test_seed", test_seed);
    LGML_COUNT("threads", threads);
    LGML_COUNT("plot_grid", plot_grid);
    t["model.hidden"] = [](RunConfig& c, const json& v) { c.model.hidden = get_counts("model.hidden", v); };
    t["model.activation"] = [](RunConfig& c, const json& v) {
      c.model.activation = parse_activation(get_string("model.activation", v));
    };
    LGML_REAL("model.learning_rate", model.learning_rate);
    LGML_COUNT("model.max_epochs", model.max_epochs);
    LGML_REAL("model.fit_tol", model.fit_tol);
    LGML_COUNT("model.restarts", model.restarts);
    LGML_COUNT("model.patience", model.patience);
    t["model.standardize"] = [](RunConfig& c, const json& v) { c.model.standardize = get_bool("model.standardize", v); };
    LGML_REAL("bnb.min_box_width", bnb.min_box_width);
    LGML_COUNT("bnb.max_boxes", bnb.max_boxes);
    t["baseline.sizes"] = [](RunConfig& c, const json& v) { c.baseline.sizes = get_counts("baseline.sizes", v); };
    LGML_COUNT("baseline.trials", baseline.trials);
    LGML_COUNT("baseline.seed", baseline.seed);
#undef LGML_REAL
#undef LGML_COUNT
#undef LGML_STRING
    return t;
  }();
  return table;
}

bool is_section(const std::string& key) { return key == "model" || key == "bnb" || key == "baseline"; }

void apply(RunConfig& c, const json& j, const std::string& prefix) {
  if (!j.is_object()) throw InvalidArgument("config" + (prefix.empty() ? "" : " section '" + prefix + "'") + " must be an object");
  for (const auto& [key, value] : j.items()) {
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    if (prefix.empty() && key == "experiment") continue;
    if (prefix.empty() && is_section(key)) {
      apply(c, value, key);
      continue;
    }
    const auto it = setters().find(full);
    if (it == setters().end()) throw InvalidArgument("unknown config key '" + full + "'");
    it->second(c, value);
  }
}

json config_json(const RunConfig& c) {
  return json{
      {"experiment", c.experiment},
      {"output", c.output},
      {"seed", c.seed},
      {"rho", c.rho},
      {"bisection_tol", c.bisection_tol},
      {"max_iterations", c.max_iterations},
      {"initial_count", c.initial_count},
      {"separation", c.separation},
      {"truth", c.truth},
      {"oracle", c.oracle},
      {"domain", c.domain},
      {"model",
       {{"hidden", c.model.hidden},
        {"activation", std::string(to_string(c.model.activation))},
        {"learning_rate", c.model.learning_rate},
        {"max_epochs", c.model.max_epochs},
        {"fit_tol", c.model.fit_tol},
        {"restarts", c.model.restarts},
        {"patience", c.model.patience},
        {"standardize", c.model.standardize}}},
      {"backend", c.backend},
      {"solver", c.solver},
      {"smt_encoding", c.smt_encoding},
      {"solver_timeout", c.solver_timeout},
      {"bnb", {{"min_box_width", c.bnb.min_box_width}, {"max_boxes", c.bnb.max_boxes}}},
      {"eps_search", c.eps_search},
      {"test_points", c.test_points},
      {"test_seed", c.test_seed},
      {"baseline", {{"sizes", c.baseline.sizes}, {"trials", c.baseline.trials}, {"seed", c.baseline.seed}}},
      {"threads", c.threads},
      {"plot_grid", c.plot_grid},
  };
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("malformed ") + what + ": " + e.what());
  }
}

// --- Trace -----------------------------------------------------------------

json opt_real(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json record_json(const IterationRecord& r) {
  return json{
      {"index", r.index},
      {"dataset_size", r.dataset_size},
      {"train_max_residual", r.train_max_residual},
      {"underfit", r.underfit},
      {"proved", r.proved},
      {"eps_star", r.eps_star},
      {"counterexample", r.counterexample ? json(*r.counterexample) : json(nullptr)},
      {"separated", r.separated},
      {"violation", r.counterexample ? json(r.counterexample_violation) : json(nullptr)},
      {"label", opt_real(r.counterexample_label)},
      {"test_rmse", opt_real(r.test_rmse)},
      {"elapsed_seconds", r.elapsed_seconds},
  };
}

std::optional<double> read_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

IterationRecord record_from_json(const json& j) {
  IterationRecord r;
  r.index = j.at("index").get<std::size_t>();
  r.dataset_size = j.at("dataset_size").get<std::size_t>();
  r.train_max_residual = j.at("train_max_residual").get<double>();
  r.underfit = j.at("underfit").get<bool>();
  r.proved = j.at("proved").get<bool>();
  r.eps_star = j.at("eps_star").get<double>();
  if (!j.at("counterexample").is_null()) r.counterexample = j.at("counterexample").get<std::vector<double>>();
  r.separated = j.value("separated", false);
  if (auto v = read_opt(j, "violation")) r.counterexample_violation = *v;
  r.counterexample_label = read_opt(j, "label");
  r.test_rmse = read_opt(j, "test_rmse");
  r.elapsed_seconds = j.at("elapsed_seconds").get<double>();
  return r;
}

RunStatus parse_status(const std::string& s) {
  for (RunStatus st : {RunStatus::Proved, RunStatus::BudgetExhausted, RunStatus::TrainingFailed}) {
    if (to_string(st) == s) return st;
  }
  throw InvalidArgument("unknown run status '" + s + "'");
}

}  // namespace

// --- RunConfig ---------------------------------------------------------------

RunConfig RunConfig::defaults(const std::string& experiment) {
  RunConfig c;
  c.experiment = experiment;
  if (experiment == "sine") {
    c.truth = "f(x)^2 + df(x,x)^2 = 1";
    c.oracle = "sin(x)";
    c.domain = "x=-pi:pi";
  } else if (experiment == "pythagoras") {
    c.truth = "a + b > f(a,b)";
    c.oracle = "sqrt(a^2 + b^2)";
    c.domain = "a=0.1:10,b=0.1:10";
    c.initial_count = 16;
  } else {
    throw InvalidArgument("unknown experiment '" + experiment + "' (expected sine or pythagoras)");
  }
  return c;
}

std::string RunConfig::to_json() const { return config_json(*this).dump(2); }

RunConfig RunConfig::from_json(std::string_view text) {
  const json j = parse_json(text, "config");
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  std::string experiment = "sine";
  if (j.contains("experiment")) experiment = get_string("experiment", j.at("experiment"));
  RunConfig c = defaults(experiment);
  apply(c, j, "");
  return c;
}

void RunConfig::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw InvalidArgument("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  if (key == "experiment") {
    const std::string name = get_string(key, value);
    RunConfig fresh = defaults(name);
    truth = fresh.truth;
    oracle = fresh.oracle;
    domain = fresh.domain;
    experiment = name;
    return;
  }
  // A string field given something that parsed as a number keeps its text.
  const auto it = setters().find(key);
  if (it == setters().end()) throw InvalidArgument("unknown config key '" + key + "'");
  try {
    it->second(*this, value);
  } catch (const InvalidArgument&) {
    if (value.is_string()) throw;
    it->second(*this, json(text));
  }
}

void RunConfig::validate() const {
  (void)defaults(experiment);
  (void)to_lgml().validate();
  (void)to_backend();
  if (test_points == 0) throw InvalidArgument("test_points must be >= 1");
  if (threads == 0) throw InvalidArgument("threads must be >= 1");
  if (baseline.trials == 0) throw InvalidArgument("baseline.trials must be >= 1");
  if (baseline.sizes.empty()) throw InvalidArgument("baseline.sizes must not be empty");
  for (auto s : baseline.sizes) {
    if (s == 0) throw InvalidArgument("baseline sizes must be >= 1");
  }
  if (output.empty()) throw InvalidArgument("output must not be empty");
}

Backend RunConfig::to_backend() const {
  Backend b;
  b.bnb = bnb;
  b.timeout_seconds = solver_timeout;
  if (!(solver_timeout > 0.0)) throw InvalidArgument("solver_timeout must be positive");
  if (smt_encoding == "real") {
    b.encoding = SmtEncoding::Real;
  } else if (smt_encoding == "float16") {
    b.encoding = SmtEncoding::Float16;
  } else {
    throw InvalidArgument("smt_encoding must be real or float16");
  }
  if (backend == "bnb") {
    b.kind = Backend::Kind::BranchAndBound;
  } else if (backend == "smt") {
    b.kind = Backend::Kind::ExternalSmt;
    if (solver.empty()) throw InvalidArgument("backend smt needs a solver command (--solver or LGML_SOLVER)");
    b.solver_command = solver;
  } else {
    throw InvalidArgument("backend must be bnb or smt");
  }
  if (!(bnb.min_box_width > 0.0) || bnb.max_boxes == 0) throw InvalidArgument("invalid bnb options");
  return b;
}

LgmlConfig RunConfig::to_lgml() const {
  LgmlConfig l;
  l.truth = AuxTruth::parse(truth);
  l.domain = Box::parse(domain);
  l.oracle = Oracle::closed_form(parse_expr(oracle), l.domain.names());
  l.initial_count = initial_count;
  l.seed = seed;
  l.model = model;
  l.rho = rho;
  l.bisection_tol = bisection_tol;
  l.max_iterations = max_iterations;
  l.separation = separation;
  l.backend = to_backend();
  l.eps_search = to_eps_search();
  return l;
}

EpsSearch RunConfig::to_eps_search() const {
  if (eps_search == "auto") return EpsSearch::Auto;
  if (eps_search == "bisection") return EpsSearch::Bisection;
  if (eps_search == "direct") return EpsSearch::DirectMaximize;
  throw InvalidArgument("eps_search must be auto, bisection or direct");
}

// --- Reports -------------------------------------------------------------------

std::string ExperimentReport::to_json() const {
  json curve = json::array();
  for (const auto& p : baseline_curve) {
    curve.push_back({{"size", p.size}, {"rmse", p.rmse}, {"trials", p.trials}, {"failures", p.failures}});
  }
  json trace_j = json::array();
  for (const auto& r : trace) trace_j.push_back(record_json(r));
  json j{
      {"experiment", experiment},
      {"config", config_json(config)},
      {"status", std::string(to_string(status))},
      {"message", message},
      {"trace", trace_j},
      {"final_dataset_size", final_dataset_size},
      {"final_rmse", final_rmse},
      {"baseline_curve", curve},
  };
  return j.dump(2);
}

ExperimentReport ExperimentReport::from_json(std::string_view text) {
  const json j = parse_json(text, "report");
  try {
    ExperimentReport r;
    r.experiment = j.at("experiment").get<std::string>();
    r.config = RunConfig::from_json(j.at("config").dump());
    r.status = parse_status(j.at("status").get<std::string>());
    r.message = j.value("message", "");
    for (const auto& e : j.at("trace")) r.trace.push_back(record_from_json(e));
    r.final_dataset_size = j.at("final_dataset_size").get<std::size_t>();
    r.final_rmse = j.at("final_rmse").get<double>();
    for (const auto& e : j.at("baseline_curve")) {
      r.baseline_curve.push_back({e.at("size").get<std::size_t>(), e.at("rmse").get<double>(),
                                  e.at("trials").get<std::size_t>(), e.at("failures").get<std::size_t>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed report: ") + e.what());
  }
}

// --- Experiments -----------------------------------------------------------------

Dataset uniform_test_set(const Box& domain, const Oracle& oracle, std::size_t count, std::uint64_t seed) {
  return sample_uniform(domain, oracle, count, seed);
}

ExperimentRun run_experiment(const RunConfig& config) {
  config.validate();
  const LgmlConfig lc = config.to_lgml();
  const Dataset test = uniform_test_set(lc.domain, *lc.oracle, config.test_points, config.test_seed);

  ExperimentRun out;
  const bool plot = lc.domain.size() == 1 && config.plot_grid > 1;
  auto observer = [&](const IterationRecord& rec, const Mlp& m, const ViolationExpr&) {
    if (!plot) return;
    const Interval r = lc.domain[0];
    for (std::size_t i = 0; i < config.plot_grid; ++i) {
      const double x = r.lo + (r.hi - r.lo) * static_cast<double>(i) / static_cast<double>(config.plot_grid - 1);
      const double in[1] = {x};
      out.grid.emplace_back(rec.index, x, m.predict(in));
    }
  };
  out.result = run(lc, &test, observer);

  ExperimentReport& rep = out.report;
  rep.experiment = config.experiment;
  rep.config = config;
  rep.status = out.result.status;
  rep.message = out.result.message;
  rep.trace = out.result.trace;
  rep.final_dataset_size = out.result.dataset.size();
  rep.final_rmse = out.result.trace.empty() ? rmse(Mlp(lc.domain.size(), lc.model.hidden, lc.model.activation), test)
                                            : rmse(out.result.final_model, test);
  return out;
}

ExperimentRun run_sine(const RunConfig& config) {
  if (config.experiment != "sine") throw InvalidArgument("run_sine needs experiment = sine");
  return run_experiment(config);
}

ExperimentRun run_pythagoras(const RunConfig& config) {
  if (config.experiment != "pythagoras") throw InvalidArgument("run_pythagoras needs experiment = pythagoras");
  return run_experiment(config);
}

std::vector<BaselinePoint> run_baseline(const RunConfig& config) {
  config.validate();
  const LgmlConfig lc = config.to_lgml();
  const Dataset test = uniform_test_set(lc.domain, *lc.oracle, config.test_points, config.test_seed);

  struct Task {
    std::size_t size;
    std::size_t trial;
  };
  std::vector<Task> tasks;
  for (auto s : config.baseline.sizes) {
    for (std::size_t t = 0; t < config.baseline.trials; ++t) tasks.push_back({s, t});
  }
  std::vector<std::optional<double>> results(tasks.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const std::uint64_t s = mix(mix(config.baseline.seed, tasks[i].size), tasks[i].trial);
      MlpConfig mc = lc.model;
      mc.input_dim = lc.domain.size();
      mc.seed = s;
      try {
        const Dataset train_set = sample_uniform(lc.domain, *lc.oracle, tasks[i].size, s);
        results[i] = rmse(train(mc, train_set).model, test);
      } catch (const TrainingError&) {
        results[i].reset();
      }
    }
  };
  const std::size_t n = std::min(config.threads, tasks.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<BaselinePoint> curve;
  std::size_t i = 0;
  for (auto s : config.baseline.sizes) {
    BaselinePoint p{s, 0.0, config.baseline.trials, 0};
    double sum = 0.0;
    for (std::size_t t = 0; t < config.baseline.trials; ++t, ++i) {
      if (results[i]) {
        sum += *results[i];
      } else {
        ++p.failures;
      }
    }
    const std::size_t ok = p.trials - p.failures;
    p.rmse = ok > 0 ? sum / static_cast<double>(ok) : std::numeric_limits<double>::quiet_NaN();
    curve.push_back(p);
  }
  return curve;
}

void write_trace_json(std::ostream& out, const std::vector<IterationRecord>& trace) {
  json j = json::array();
  for (const auto& r : trace) j.push_back(record_json(r));
  out << j.dump(2) << '\n';
}

void write_curve_csv(std::ostream& out, const std::vector<BaselinePoint>& curve) {
  const auto old = out.precision(17);
  out << "size,rmse\n";
  for (const auto& p : curve) out << p.size << ',' << p.rmse << '\n';
  out.precision(old);
}

void write_grid_csv(std::ostream& out, const std::vector<std::tuple<std::size_t, double, double>>& grid) {
  const auto old = out.precision(17);
  out << "iteration,x,fhat\n";
  for (const auto& [it, x, y] : grid) out << it << ',' << x << ',' << y << '\n';
  out.precision(old);
}

}  // namespace lgml
