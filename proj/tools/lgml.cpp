// lgml command-line tool: run experiments, baselines, and standalone
// verification of a model checkpoint against an auxiliary truth.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lgml/bench.hpp"
#include "lgml/error.hpp"
#include "lgml/expr.hpp"
#include "lgml/loop.hpp"
#include "lgml/model.hpp"
#include "lgml/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kBudget = 2;
constexpr int kCounterexample = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw lgml::InvalidArgument("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw lgml::Error("cannot write '" + path.string() + "'");
  out << text;
}

struct Common {
  std::string config_path;
  std::string experiment;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::string solver;
  std::optional<std::size_t> threads;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration");
  cmd->add_option("--experiment", c.experiment, "sine or pythagoras")->check(CLI::IsMember({"sine", "pythagoras"}));
  cmd->add_option("--output", c.output, "Output directory");
  cmd->add_option("--seed", c.seed, "Seed for sampling and training");
  cmd->add_option("--backend", c.backend, "Decision backend")->check(CLI::IsMember({"bnb", "smt"}));
  cmd->add_option("--solver", c.solver, "SMT-LIB solver command (default: $LGML_SOLVER)");
  cmd->add_option("--threads", c.threads, "Worker threads; 1 is fully sequential");
  cmd->add_option("--set", c.sets, "Override a config key, e.g. --set model.hidden=[4,4]");
}

// Config file, then --experiment, then flags, then --set in order.
lgml::RunConfig build_config(const Common& c) {
  lgml::RunConfig cfg = c.config_path.empty() ? lgml::RunConfig::defaults(c.experiment.empty() ? "sine" : c.experiment)
                                              : lgml::RunConfig::from_json(read_file(c.config_path));
  if (!c.config_path.empty() && !c.experiment.empty() && c.experiment != cfg.experiment) {
    cfg.set("experiment=" + c.experiment);
  }
  if (const char* env = std::getenv("LGML_SOLVER"); env != nullptr && cfg.solver.empty()) cfg.solver = env;
  if (!c.output.empty()) cfg.output = c.output;
  if (c.seed) cfg.seed = *c.seed;
  if (!c.backend.empty()) cfg.backend = c.backend;
  if (!c.solver.empty()) cfg.solver = c.solver;
  if (c.threads) cfg.threads = *c.threads;
  for (const auto& s : c.sets) cfg.set(s);
  cfg.validate();
  return cfg;
}

int cmd_run(const Common& c) {
  const lgml::RunConfig cfg = build_config(c);
  lgml::ExperimentRun run = lgml::run_experiment(cfg);

  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  const auto& features = run.result.dataset.features();
  {
    std::ostringstream csv;
    lgml::write_trace_csv(csv, run.report.trace, features);
    write_file(dir / "trace.csv", csv.str());
  }
  {
    std::ostringstream js;
    lgml::write_trace_json(js, run.report.trace);
    write_file(dir / "trace.json", js.str());
  }
  write_file(dir / "report.json", run.report.to_json() + "\n");
  if (!run.report.trace.empty()) write_file(dir / "model.json", run.result.final_model.to_json() + "\n");
  {
    std::ostringstream data;
    run.result.dataset.write_csv(data);
    write_file(dir / "dataset.csv", data.str());
  }
  if (!run.grid.empty()) {
    std::ostringstream grid;
    lgml::write_grid_csv(grid, run.grid);
    write_file(dir / "fhat_grid.csv", grid.str());
  }

  json summary{{"experiment", cfg.experiment},
               {"status", std::string(lgml::to_string(run.report.status))},
               {"iterations", run.report.trace.size()},
               {"dataset_size", run.report.final_dataset_size},
               {"final_rmse", run.report.final_rmse},
               {"output", dir.string()}};
  std::cout << summary.dump() << '\n';
  switch (run.report.status) {
    case lgml::RunStatus::Proved: return kOk;
    case lgml::RunStatus::BudgetExhausted: return kBudget;
    case lgml::RunStatus::TrainingFailed: std::cerr << "lgml: training failed: " << run.report.message << '\n'; return kError;
  }
  return kError;
}

int cmd_baseline(const Common& c) {
  const lgml::RunConfig cfg = build_config(c);
  const auto curve = lgml::run_baseline(cfg);
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  std::ostringstream csv;
  lgml::write_curve_csv(csv, curve);
  write_file(dir / "baseline.csv", csv.str());
  lgml::ExperimentReport rep;
  rep.experiment = cfg.experiment;
  rep.config = cfg;
  rep.status = lgml::RunStatus::BudgetExhausted;
  rep.message = "baseline only";
  rep.baseline_curve = curve;
  write_file(dir / "baseline_report.json", rep.to_json() + "\n");
  std::cout << csv.str();
  return kOk;
}

struct VerifyArgs {
  Common common;
  std::string model_path;
  std::string model_expr;
  std::string truth;
  std::string domain;
  std::optional<double> rho;
  std::optional<double> eps;
  std::string encoding = "real";
};

lgml::SymbolicModel load_model(const VerifyArgs& a, const lgml::Box& domain) {
  if (!a.model_expr.empty()) {
    if (!a.model_path.empty()) throw lgml::InvalidArgument("give either --model or --model-expr, not both");
    return lgml::SymbolicModel::from_value(domain.names(), lgml::parse_expr(a.model_expr));
  }
  if (a.model_path.empty()) throw lgml::InvalidArgument("a model is required (--model or --model-expr)");
  const std::string text = read_file(a.model_path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw lgml::InvalidArgument("malformed checkpoint: " + std::string(e.what()));
  }
  const std::string kind = j.is_object() ? j.value("kind", "") : "";
  if (kind == "mlp") return lgml::to_expr(lgml::Mlp::from_json(text));
  if (kind == "expr") {
    try {
      return lgml::SymbolicModel::from_value(j.at("features").get<std::vector<std::string>>(),
                                             lgml::parse_expr(j.at("expr").get<std::string>()));
    } catch (const json::exception& e) {
      throw lgml::InvalidArgument("malformed expression checkpoint: " + std::string(e.what()));
    }
  }
  throw lgml::InvalidArgument("checkpoint kind must be \"mlp\" or \"expr\"");
}

json point_json(const std::vector<std::string>& names, const std::vector<double>& x) {
  json p = json::object();
  for (std::size_t i = 0; i < names.size(); ++i) p[names[i]] = x[i];
  return p;
}

// Truth and domain come from the flags or, when absent, from the config.
lgml::ViolationExpr verify_setup(const VerifyArgs& a, lgml::RunConfig& cfg) {
  cfg = build_config(a.common);
  if (!a.truth.empty()) cfg.truth = a.truth;
  if (!a.domain.empty()) cfg.domain = a.domain;
  if (a.rho) cfg.rho = *a.rho;
  const lgml::AuxTruth truth = lgml::AuxTruth::parse(cfg.truth);
  const lgml::Box domain = lgml::Box::parse(cfg.domain);
  return lgml::build_violation(truth, load_model(a, domain), domain);
}

int cmd_verify(const VerifyArgs& a) {
  lgml::RunConfig cfg;
  const lgml::ViolationExpr v = verify_setup(a, cfg);
  lgml::EpsStarOptions opts;
  opts.rho = cfg.rho;
  opts.bisection_tol = cfg.bisection_tol;
  opts.search = cfg.to_eps_search();
  const auto outcome = lgml::find_eps_star(v, cfg.to_backend(), opts);
  json out;
  int code = kOk;
  if (const auto* proof = std::get_if<lgml::Proof>(&outcome)) {
    out = {{"result", "proof"}, {"rho", cfg.rho}, {"certified_upper_bound", proof->certified_upper_bound}};
  } else {
    const auto& r = std::get<lgml::EpsStarResult>(outcome);
    out = {{"result", "counterexample"},
           {"rho", cfg.rho},
           {"eps_star", r.eps_star},
           {"strongest_point", point_json(v.domain.names(), r.strongest_point)},
           {"violation", r.strongest_violation}};
    code = kCounterexample;
  }
  out["queries"] = std::get_if<lgml::Proof>(&outcome) ? std::get<lgml::Proof>(outcome).trail.size()
                                                      : std::get<lgml::EpsStarResult>(outcome).trail.size();
  std::cout << out.dump(2) << '\n';
  return code;
}

int cmd_emit_smt(const VerifyArgs& a) {
  lgml::RunConfig cfg;
  const lgml::ViolationExpr v = verify_setup(a, cfg);
  lgml::SmtEncoding enc;
  if (a.encoding == "real") {
    enc = lgml::SmtEncoding::Real;
  } else if (a.encoding == "float16") {
    enc = lgml::SmtEncoding::Float16;
  } else {
    throw lgml::InvalidArgument("encoding must be real or float16");
  }
  const double eps = a.eps.value_or(cfg.rho);
  if (v.relation == lgml::Relation::Equality && eps < 0.0) {
    throw lgml::InvalidArgument("eps must be non-negative for an equality truth");
  }
  std::cout << lgml::emit_smtlib(v, eps, enc);
  return kOk;
}

void add_verify_options(CLI::App* cmd, VerifyArgs& a) {
  add_common(cmd, a.common);
  cmd->add_option("--model", a.model_path, "Checkpoint: {\"kind\":\"mlp\",...} or {\"kind\":\"expr\",...}");
  cmd->add_option("--model-expr", a.model_expr, "Model as an expression over the domain variables");
  cmd->add_option("--truth", a.truth, "Auxiliary truth, e.g. \"a + b > f(a,b)\"");
  cmd->add_option("--domain", a.domain, "Input box, e.g. \"x=-pi:pi\"");
  cmd->add_option("--rho", a.rho, "Target machine error");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Logic guided machine learning"};
  app.require_subcommand(1);

  Common run_args;
  add_common(app.add_subcommand("run", "Run an LGML experiment"), run_args);
  Common baseline_args;
  add_common(app.add_subcommand("baseline", "Train plain MLPs on growing uniform training sets"), baseline_args);
  VerifyArgs verify_args;
  add_verify_options(app.add_subcommand("verify", "Find eps* and the strongest counterexample of a model"),
                     verify_args);
  VerifyArgs emit_args;
  auto* emit = app.add_subcommand("emit-smt", "Print the SMT-LIB2 query for a model");
  add_verify_options(emit, emit_args);
  emit->add_option("--eps", emit_args.eps, "Threshold in the query (default: rho)");
  emit->add_option("--encoding", emit_args.encoding, "real or float16")->check(CLI::IsMember({"real", "float16"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kError;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "run") return cmd_run(run_args);
    if (name == "baseline") return cmd_baseline(baseline_args);
    if (name == "verify") return cmd_verify(verify_args);
    return cmd_emit_smt(emit_args);
  } catch (const std::exception& e) {
    std::cerr << "lgml: " << e.what() << '\n';
  }
  return kError;
}
