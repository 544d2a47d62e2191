#include "cli.hpp"

#include "table.hpp"

#include "rowsurv/balance.hpp"
#include "rowsurv/errors.hpp"
#include "rowsurv/harness.hpp"
#include "rowsurv/row_weights.hpp"
#include "rowsurv/simulate.hpp"
#include "rowsurv/survival.hpp"
#include "rowsurv/version.hpp"

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace rowsurv::cli {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;
using json = nlohmann::ordered_json;

namespace {

// Carries an exit code out of a command.
struct Failure : std::runtime_error {
  Failure(int code_, const std::string& what) : std::runtime_error(what), code(code_) {}
  int code;
};

[[noreturn]] void fail(int code, const std::string& msg) { throw Failure(code, msg); }

// ---------------------------------------------------------------------------
// Inputs

struct Dataset {
  VectorXd time;
  VectorXi event;
  VectorXd treatment;
  MatrixXd x;
  std::vector<std::string> covariates;
  Table table;
};

Dataset load_dataset(const std::string& path, const std::string& treatment_col,
                     const std::set<std::string>& exclude = {}) {
  Dataset d;
  d.table = read_table(path);
  const Table& t = d.table;
  for (const std::string& name : {std::string("time"), std::string("event"), treatment_col}) {
    if (t.find(name) < 0) fail(kInvalidInput, fmt::format("{}: required column '{}' is missing", path, name));
  }
  const Index n = t.values.rows();
  if (n < 2) fail(kInvalidInput, fmt::format("{}: at least two data rows are required, found {}", path, n));

  d.time = t.values.col(t.find("time"));
  d.treatment = t.values.col(t.find(treatment_col));
  const VectorXd ev = t.values.col(t.find("event"));
  d.event.resize(n);
  for (Index i = 0; i < n; ++i) {
    if (!(d.time(i) > 0.0)) {
      fail(kInvalidInput, fmt::format("{}: row {}: time must be positive, found {}", path, i + 1, d.time(i)));
    }
    if (ev(i) != 0.0 && ev(i) != 1.0) {
      fail(kInvalidInput, fmt::format("{}: row {}: event must be 0 or 1, found {}", path, i + 1, ev(i)));
    }
    d.event(i) = static_cast<int>(ev(i));
  }
  std::vector<Index> cols;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    const std::string& name = t.header[j];
    if (name == "time" || name == "event" || name == treatment_col || exclude.count(name)) continue;
    cols.push_back(static_cast<Index>(j));
    d.covariates.push_back(name);
  }
  d.x.resize(n, static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) d.x.col(static_cast<Index>(k)) = t.values.col(cols[k]);
  return d;
}

VectorXd load_weights(const std::string& spec, Index n) {
  if (spec == "uniform") return VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  const Table t = read_table(spec);
  int col = t.find("row_weight");
  if (col < 0) {
    if (t.header.size() != 1) {
      fail(kInvalidInput, fmt::format("{}: expected a 'row_weight' column or a single column", spec));
    }
    col = 0;
  }
  if (t.values.rows() != n) {
    fail(kInvalidInput,
         fmt::format("{}: {} weights for {} data rows; weights must align with input rows", spec, t.values.rows(), n));
  }
  VectorXd w = t.values.col(col);
  if ((w.array() < 0.0).any()) fail(kInvalidInput, fmt::format("{}: weights must be nonnegative", spec));
  if (!(w.sum() > 0.0)) fail(kInvalidInput, fmt::format("{}: weights sum to zero", spec));
  return w / w.sum();
}

std::string column_name(const ConstantColumn& e, const std::vector<std::string>& names, const std::string& treatment) {
  if (e.is_treatment()) return treatment;
  return e.column() < names.size() ? names[e.column()] : std::to_string(e.column());
}

// ---------------------------------------------------------------------------
// Outputs

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(kOther, fmt::format("cannot write '{}'", path));
  f << content;
  if (!f) fail(kOther, fmt::format("error while writing '{}'", path));
}

json named(const std::vector<std::string>& names, const VectorXd& v) {
  json o = json::object();
  for (Index k = 0; k < v.size(); ++k) o[names[static_cast<std::size_t>(k)]] = v(k);
  return o;
}

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args) {
    doc_["tool"] = "rowsurv";
    doc_["version"] = kVersion;
    doc_["eigen_version"] = fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION);
    doc_["command"] = std::move(command);
    doc_["argv"] = args;
    doc_["cwd"] = std::filesystem::current_path().string();
    doc_["options"] = json::object();
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
    doc_["stages"] = json::object();
  }

  json& options() { return doc_["options"]; }
  void input(const std::string& path) {
    if (path == "uniform") return;
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    doc_["inputs"].push_back({{"path", path}, {"bytes", ec ? 0 : size}});
  }
  void output(const std::string& path) { doc_["outputs"].push_back(path); }
  void solver(const qp::SolverSettings& s) {
    doc_["solver"] = {{"max_iterations", s.max_iterations},
                      {"eps_primal", s.eps_primal},
                      {"eps_dual", s.eps_dual},
                      {"infeasibility_window", s.infeasibility_window}};
  }

  template <class F>
  auto stage(const std::string& name, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    struct Record {
      Manifest* m;
      std::string name;
      std::chrono::steady_clock::time_point start;
      ~Record() {
        m->doc_["stages"][name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      }
    } record{this, name, start};
    return f();
  }

  void write(const std::string& path) {
    doc_["manifest"] = path;
    write_file(path, doc_.dump(2) + "\n");
  }

 private:
  json doc_;
};

std::string manifest_path(const std::string& out, const std::string& command) {
  return out.empty() ? fmt::format("rowsurv-{}.manifest.json", command) : out + ".manifest.json";
}

void add_solver_options(CLI::App* app, qp::SolverSettings& s) {
  app->add_option("--max-iter", s.max_iterations, "Solver iteration limit")->check(CLI::PositiveNumber);
  app->add_option("--eps-primal", s.eps_primal, "Primal residual tolerance")->check(CLI::PositiveNumber);
  app->add_option("--eps-dual", s.eps_dual, "Dual residual tolerance")->check(CLI::PositiveNumber);
  app->add_option("--infeasibility-window", s.infeasibility_window, "Iterations per infeasibility check")
      ->check(CLI::PositiveNumber);
}

// ---------------------------------------------------------------------------
// weights

struct WeightsArgs {
  std::string input, treatment_col = "treatment", out;
  double delta = 0.001;
  bool escalate = false;
  qp::SolverSettings solver;
};

int cmd_weights(const WeightsArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Manifest manifest("weights", argv);
  manifest.options() = {{"input", a.input}, {"treatment_col", a.treatment_col}, {"out", a.out},
                        {"delta", a.delta}, {"escalate", a.escalate}};
  manifest.solver(a.solver);
  manifest.input(a.input);
  const Dataset d = manifest.stage("read", [&] { return load_dataset(a.input, a.treatment_col); });
  if (d.covariates.empty()) fail(kInvalidInput, a.input + ": no covariate columns to balance");

  weights::RowResult r;
  try {
    r = manifest.stage("solve", [&] {
      if (a.escalate) {
        return weights::escalate_delta(d.x, d.treatment, {a.delta, 10.0 * a.delta, 100.0 * a.delta}, a.solver);
      }
      return weights::compute_row(d.x, d.treatment, a.delta, a.solver);
    });
  } catch (const ConstantColumn& e) {
    fail(kInvalidInput, fmt::format("{}: column '{}' is constant and cannot be standardized; drop or recode it",
                                    a.input, column_name(e, d.covariates, a.treatment_col)));
  } catch (const AllInfeasible& e) {
    fail(kInfeasible, e.what());
  }
  if (r.solver_status == qp::Status::Infeasible) fail(kInfeasible, r.guidance);
  if (r.solver_status == qp::Status::MaxIterations) fail(kNotConverged, r.guidance);

  std::string csv = "row_weight\n";
  for (Index i = 0; i < r.weights.size(); ++i) csv += format_number(r.weights(i)) + "\n";

  json summary;
  summary["status"] = std::string(qp::to_string(r.solver_status));
  summary["delta"] = r.delta;
  summary["tried_deltas"] = r.tried_deltas;
  summary["iterations"] = r.iterations;
  summary["n"] = r.weights.size();
  summary["effective_sample_size"] = r.effective_sample_size;
  summary["max_abs_correlation_before"] = r.correlations_before.cwiseAbs().maxCoeff();
  summary["max_abs_correlation_after"] = r.correlations_after.cwiseAbs().maxCoeff();
  summary["correlations_before"] = named(d.covariates, r.correlations_before);
  summary["correlations_after"] = named(d.covariates, r.correlations_after);
  summary["duals"] = named(d.covariates, r.duals);
  const std::string text = summary.dump(2) + "\n";

  if (!a.out.empty()) {
    write_file(a.out, csv);
    write_file(a.out + ".summary.json", text);
    manifest.output(a.out);
    manifest.output(a.out + ".summary.json");
  } else {
    out << csv;
  }
  (a.out.empty() ? err : out) << text;
  manifest.write(manifest_path(a.out, "weights"));
  return kOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string input, weights = "uniform", se = "robust", treatment_col = "treatment", out;
  int boot_reps = 200;
  std::uint64_t seed = 1;
  double delta = 0.001;
  int threads = 1;
  qp::SolverSettings solver;
};

int cmd_fit(const FitArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream&) {
  Manifest manifest("fit", argv);
  manifest.options() = {{"input", a.input},     {"weights", a.weights},     {"se", a.se},
                        {"boot_reps", a.boot_reps}, {"seed", a.seed},       {"delta", a.delta},
                        {"treatment_col", a.treatment_col}, {"threads", a.threads}, {"out", a.out}};
  manifest.solver(a.solver);
  manifest.input(a.input);
  manifest.input(a.weights);
  const Dataset d = manifest.stage("read", [&] { return load_dataset(a.input, a.treatment_col); });
  const VectorXd w = load_weights(a.weights, d.time.size());

  json report;
  try {
    const surv::CoxFit fit =
        manifest.stage("fit", [&] { return surv::fit_weighted_cox({d.time, d.event, d.treatment, w}); });
    if (!fit.converged) fail(kCoxFailure, "Cox fit did not converge within 50 Newton iterations");
    double se = fit.se_robust;
    report["theta"] = fit.theta;
    report["hazard_ratio"] = fit.hazard_ratio;
    report["se_type"] = a.se;
    report["se_naive"] = fit.se_naive;
    report["se_robust"] = fit.se_robust;
    if (a.se == "naive") se = fit.se_naive;
    if (a.se == "boot") {
      const surv::BootstrapData bd{d.time, d.event, d.treatment, d.x};
      const auto weighting = a.weights == "uniform" ? surv::BootstrapWeighting::Uniform : surv::BootstrapWeighting::Row;
      if (weighting == surv::BootstrapWeighting::Row && d.covariates.empty()) {
        fail(kInvalidInput, "bootstrap with ROW weights needs covariate columns");
      }
      const surv::BootstrapCi ci = manifest.stage("bootstrap", [&] {
        return surv::bootstrap_ci(bd, a.delta, a.boot_reps, a.seed, fit.theta, weighting, a.solver, a.threads);
      });
      se = ci.se_boot;
      report["se_boot"] = ci.se_boot;
      report["bootstrap"] = {{"recipe", weighting == surv::BootstrapWeighting::Row ? "row" : "uniform"},
                             {"delta", a.delta},
                             {"replicates", a.boot_reps},
                             {"replicates_used", ci.replicates_used},
                             {"replicates_failed", ci.replicates_failed},
                             {"seed", a.seed}};
    }
    report["se"] = se;
    const double lo = fit.theta - surv::kNormal975 * se;
    const double hi = fit.theta + surv::kNormal975 * se;
    report["ci_low"] = lo;
    report["ci_high"] = hi;
    report["hr_ci_low"] = std::exp(lo);
    report["hr_ci_high"] = std::exp(hi);
    report["loglik"] = fit.loglik;
    report["iterations"] = fit.iterations;
    report["converged"] = fit.converged;
  } catch (const ConstantColumn& e) {
    fail(kInvalidInput, fmt::format("column '{}' is constant", column_name(e, d.covariates, a.treatment_col)));
  } catch (const CoxError& e) {
    fail(kCoxFailure, e.what());
  } catch (const TooManyFailures& e) {
    fail(kCoxFailure, e.what());
  }
  const std::string text = report.dump(2) + "\n";
  out << text;
  if (!a.out.empty()) {
    write_file(a.out, text);
    manifest.output(a.out);
  }
  manifest.write(manifest_path(a.out, "fit"));
  return kOk;
}

// ---------------------------------------------------------------------------
// balance

struct BalanceArgs {
  std::string input, weights = "uniform", metric, treatment_col = "treatment", out;
};

int cmd_balance(const BalanceArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream&) {
  Manifest manifest("balance", argv);
  manifest.options() = {{"input", a.input}, {"weights", a.weights}, {"metric", a.metric},
                        {"treatment_col", a.treatment_col}, {"out", a.out}};
  manifest.input(a.input);
  manifest.input(a.weights);
  const Dataset d = manifest.stage("read", [&] { return load_dataset(a.input, a.treatment_col); });
  if (d.covariates.empty()) fail(kInvalidInput, a.input + ": no covariate columns");
  const VectorXd w = load_weights(a.weights, d.time.size());
  const Index n = d.time.size();
  const VectorXd uniform = VectorXd::Constant(n, 1.0 / static_cast<double>(n));

  const bool binary = balance::is_binary(d.treatment);
  std::string metric = a.metric.empty() ? (binary ? "asmd" : "abscorr") : a.metric;
  if (metric == "asmd" && !binary) {
    fail(kInvalidInput, fmt::format("metric asmd needs a 0/1 treatment; column '{}' is continuous (use abscorr)",
                                    a.treatment_col));
  }
  balance::BalanceReport pre, post;
  try {
    manifest.stage("balance", [&] {
      if (metric == "asmd") {
        pre = balance::asmd(d.x, d.treatment, uniform);
        post = balance::asmd(d.x, d.treatment, w);
      } else {
        pre = balance::abs_corr(d.x, d.treatment, uniform);
        post = balance::abs_corr(d.x, d.treatment, w);
      }
      return 0;
    });
  } catch (const ConstantColumn& e) {
    fail(kInvalidInput, fmt::format("column '{}' is constant", column_name(e, d.covariates, a.treatment_col)));
  }

  std::string csv = "covariate,pre,post\n";
  for (Index k = 0; k < pre.per_covariate.size(); ++k) {
    csv += fmt::format("{},{},{}\n", d.covariates[static_cast<std::size_t>(k)], format_number(pre.per_covariate(k)),
                       format_number(post.per_covariate(k)));
  }
  std::string summary = "statistic,pre,post\n";
  summary += fmt::format("min,{},{}\n", format_number(pre.summary.min), format_number(post.summary.min));
  summary += fmt::format("median,{},{}\n", format_number(pre.summary.median), format_number(post.summary.median));
  summary += fmt::format("max,{},{}\n", format_number(pre.summary.max), format_number(post.summary.max));

  if (a.out.empty()) {
    out << csv << "\n" << summary;
  } else {
    write_file(a.out, csv);
    write_file(a.out + ".summary.csv", summary);
    manifest.output(a.out);
    manifest.output(a.out + ".summary.csv");
  }
  manifest.write(manifest_path(a.out, "balance"));
  return kOk;
}

// ---------------------------------------------------------------------------
// km

struct KmArgs {
  std::string input, weights = "uniform", group_col, out;
};

int cmd_km(const KmArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream&) {
  Manifest manifest("km", argv);
  manifest.options() = {{"input", a.input}, {"weights", a.weights}, {"group_col", a.group_col}, {"out", a.out}};
  manifest.input(a.input);
  manifest.input(a.weights);
  const Table t = read_table(a.input);
  for (const char* name : {"time", "event"}) {
    if (t.find(name) < 0) fail(kInvalidInput, fmt::format("{}: required column '{}' is missing", a.input, name));
  }
  const Index n = t.values.rows();
  if (n < 2) fail(kInvalidInput, a.input + ": at least two data rows are required");
  surv::SurvivalSample s;
  s.time = t.values.col(t.find("time"));
  const VectorXd ev = t.values.col(t.find("event"));
  s.event.resize(n);
  for (Index i = 0; i < n; ++i) {
    if (!(s.time(i) > 0.0)) fail(kInvalidInput, fmt::format("{}: row {}: time must be positive", a.input, i + 1));
    if (ev(i) != 0.0 && ev(i) != 1.0) fail(kInvalidInput, fmt::format("{}: row {}: event must be 0 or 1", a.input, i + 1));
    s.event(i) = static_cast<int>(ev(i));
  }
  s.treatment = VectorXd::Zero(n);
  s.weight = load_weights(a.weights, n);
  std::optional<VectorXi> group;
  if (!a.group_col.empty()) {
    const int g = t.find(a.group_col);
    if (g < 0) fail(kInvalidInput, fmt::format("{}: group column '{}' is missing", a.input, a.group_col));
    const VectorXd gv = t.values.col(g);
    if (!balance::is_binary(gv)) fail(kInvalidInput, fmt::format("group column '{}' must hold 0/1 labels", a.group_col));
    group = gv.cast<int>();
  }
  const std::vector<surv::KmCurve> curves = manifest.stage("km", [&] { return surv::weighted_km(s, group); });
  std::string csv = "group,time,survival\n";
  for (const auto& c : curves) {
    for (const auto& p : c.points) csv += fmt::format("{},{},{}\n", c.group, format_number(p.time), format_number(p.survival));
  }
  if (a.out.empty()) {
    out << csv;
  } else {
    write_file(a.out, csv);
    manifest.output(a.out);
  }
  manifest.write(manifest_path(a.out, "km"));
  return kOk;
}

// ---------------------------------------------------------------------------
// simulate

std::vector<double> parse_list(const std::string& text, const std::string& key) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) fail(kInvalidInput, fmt::format("config: empty entry in '{}'", key));
    item = item.substr(b, e - b + 1);
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) fail(kInvalidInput, fmt::format("config: '{}' in '{}' is not a number", item, key));
    v.push_back(x);
  }
  if (v.empty()) fail(kInvalidInput, fmt::format("config: '{}' is empty", key));
  return v;
}

std::vector<std::string> parse_names(const std::string& text) {
  std::vector<std::string> v;
  std::string item;
  int depth = 0;
  for (char c : text + ",") {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      const auto b = item.find_first_not_of(" \t");
      if (b != std::string::npos) v.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
      item.clear();
    } else {
      item.push_back(c);
    }
  }
  return v;
}

struct SimulationSpec {
  sim::ScenarioConfig base;
  std::vector<harness::Estimator> estimators;
  std::map<std::string, std::vector<double>> axes;
  int boot_reps = 0;
  qp::SolverSettings solver;
};

SimulationSpec read_config(const std::string& path, const std::string& axis_name) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(kInvalidInput, fmt::format("config: {}", e.what()));
  }
  for (const auto& [section, _] : tree) {
    if (section != "scenario" && section != "estimators" && section != "axis" && section != "solver") {
      fail(kInvalidInput, fmt::format("config: unknown section [{}]", section));
    }
  }
  const pt::ptree scenario = tree.get_child("scenario", pt::ptree());
  const std::string kind_text = scenario.get<std::string>("treatment", "binary");
  if (kind_text != "binary" && kind_text != "continuous") {
    fail(kInvalidInput, "config: scenario.treatment must be binary or continuous");
  }
  const auto kind = kind_text == "binary" ? sim::TreatmentKind::Binary : sim::TreatmentKind::Continuous;

  SimulationSpec spec;
  std::optional<harness::Axis> axis;
  if (!axis_name.empty()) {
    try {
      axis = harness::parse_axis(axis_name);
    } catch (const InvalidInput& e) {
      fail(kInvalidInput, e.what());
    }
  }
  const bool gaussian_axis = axis && (*axis == harness::Axis::SampleSize || *axis == harness::Axis::NumConfounders);
  spec.base = gaussian_axis ? harness::gaussian_config(*axis, kind) : sim::ScenarioConfig{};
  sim::ScenarioConfig& c = spec.base;
  c.treatment = kind;

  auto number = [&](const std::string& key, const std::string& text) {
    const std::vector<double> v = parse_list(text, key);
    if (v.size() != 1) fail(kInvalidInput, fmt::format("config: scenario.{} takes one value", key));
    return v.front();
  };
  for (const auto& [key, node] : scenario) {
    const std::string value = node.get_value<std::string>();
    if (key == "treatment") continue;
    if (key == "generator") {
      if (value == "six_covariate") {
        c.generator = sim::Generator::SixCovariate;
      } else if (value == "gaussian") {
        c.generator = sim::Generator::Gaussian;
      } else {
        fail(kInvalidInput, "config: scenario.generator must be six_covariate or gaussian");
      }
    } else if (key == "n") {
      c.n = static_cast<Index>(number(key, value));
    } else if (key == "theta") {
      c.theta = number(key, value);
    } else if (key == "psi") {
      c.psi = number(key, value);
    } else if (key == "shape") {
      c.shape = number(key, value);
    } else if (key == "beta") {
      const std::vector<double> b = parse_list(value, key);
      c.beta = Eigen::Map<const VectorXd>(b.data(), static_cast<Index>(b.size()));
    } else if (key == "gamma") {
      c.gamma = number(key, value);
    } else if (key == "eta") {
      c.eta = number(key, value);
    } else if (key == "tau") {
      c.tau = number(key, value);
    } else if (key == "epsilon") {
      c.epsilon = number(key, value);
    } else if (key == "num_confounders") {
      c.num_confounders = static_cast<int>(number(key, value));
    } else if (key == "confounder_beta") {
      c.confounder_beta = number(key, value);
    } else if (key == "confounder_gamma") {
      c.confounder_gamma = number(key, value);
    } else {
      fail(kInvalidInput, fmt::format("config: unknown key scenario.{}", key));
    }
  }

  const pt::ptree est = tree.get_child("estimators", pt::ptree());
  for (const auto& [key, node] : est) {
    const std::string value = node.get_value<std::string>();
    if (key == "list") {
      for (const std::string& name : parse_names(value)) {
        try {
          harness::Estimator e = harness::parse_estimator(name);
          if (kind == sim::TreatmentKind::Continuous && e.type == harness::EstimatorType::IpwBinary) {
            e.type = harness::EstimatorType::IpwContinuous;
          }
          spec.estimators.push_back(e);
        } catch (const InvalidInput& e) {
          fail(kInvalidInput, fmt::format("config: {}", e.what()));
        }
      }
    } else if (key == "boot_reps") {
      spec.boot_reps = static_cast<int>(number(key, value));
    } else {
      fail(kInvalidInput, fmt::format("config: unknown key estimators.{}", key));
    }
  }
  if (spec.estimators.empty()) fail(kInvalidInput, "config: estimators.list is empty or missing");

  // get_child with a default returns a reference to that default, so copy it
  // before iterating; a missing section would otherwise dangle.
  const pt::ptree axis_section = tree.get_child("axis", pt::ptree());
  for (const auto& [key, node] : axis_section) {
    try {
      harness::parse_axis(key);
    } catch (const InvalidInput& e) {
      fail(kInvalidInput, fmt::format("config: {}", e.what()));
    }
    spec.axes[key] = parse_list(node.get_value<std::string>(), "axis." + key);
  }

  const pt::ptree solver_section = tree.get_child("solver", pt::ptree());
  for (const auto& [key, node] : solver_section) {
    const double v = number(key, node.get_value<std::string>());
    if (key == "max_iterations") {
      spec.solver.max_iterations = static_cast<int>(v);
    } else if (key == "eps_primal") {
      spec.solver.eps_primal = v;
    } else if (key == "eps_dual") {
      spec.solver.eps_dual = v;
    } else if (key == "infeasibility_window") {
      spec.solver.infeasibility_window = static_cast<int>(v);
    } else {
      fail(kInvalidInput, fmt::format("config: unknown key solver.{}", key));
    }
  }
  return spec;
}

struct SimulateArgs {
  std::string config, axis, out;
  int replicates = 100;
  std::uint64_t seed = 1;
  int threads = 1;
  int boot_reps = -1;
};

const char* kMetricsHeader =
    "scenario,axis,axis_value,estimator,replicates,failures,mean_theta,abs_bias,abs_bias_hr,rmse,empirical_sd,"
    "coverage_naive,coverage_robust,coverage_boot,se_ratio_naive,se_ratio_robust,se_ratio_boot,balance\n";

int cmd_simulate(const SimulateArgs& a, const std::vector<std::string>& argv, std::ostream&, std::ostream& err) {
  Manifest manifest("simulate", argv);
  manifest.input(a.config);
  SimulationSpec spec = read_config(a.config, a.axis);
  if (a.boot_reps >= 0) spec.boot_reps = a.boot_reps;

  std::string axis_key = a.axis;
  if (axis_key.empty()) {
    if (spec.axes.size() != 1) fail(kInvalidInput, "--axis is required when the config lists zero or several axes");
    axis_key = spec.axes.begin()->first;
  }
  const harness::Axis axis = harness::parse_axis(axis_key);
  const auto grid_it = spec.axes.find(harness::to_string(axis));
  if (grid_it == spec.axes.end()) {
    fail(kInvalidInput, fmt::format("config: [axis] has no grid for '{}'", harness::to_string(axis)));
  }
  manifest.options() = {{"config", a.config},       {"axis", harness::to_string(axis)}, {"grid", grid_it->second},
                        {"replicates", a.replicates}, {"seed", a.seed},                   {"threads", a.threads},
                        {"boot_reps", spec.boot_reps}, {"out", a.out}};
  manifest.solver(spec.solver);

  harness::RunOptions options;
  options.threads = a.threads;
  options.bootstrap_reps = spec.boot_reps;
  options.solver = spec.solver;

  std::vector<harness::MetricRow> rows;
  try {
    rows = manifest.stage("simulate", [&] {
      return harness::sweep(axis, grid_it->second, spec.base, spec.estimators, a.replicates, a.seed, options);
    });
  } catch (const TooManyFailures& e) {
    fail(kSimulationFailures, e.what());
  }

  std::string csv = kMetricsHeader;
  std::string timing = "axis,axis_value,estimator,mean_time_seconds\n";
  for (const auto& r : rows) {
    csv += fmt::format("{},{},{},{},{},{}", r.scenario, r.axis, format_number(r.axis_value), r.estimator, r.replicates,
                       r.failures);
    for (double v : {r.mean_theta, r.abs_bias, r.abs_bias_hr, r.rmse, r.empirical_sd, r.coverage_naive,
                     r.coverage_robust, r.coverage_boot, r.se_ratio_naive, r.se_ratio_robust, r.se_ratio_boot,
                     r.balance}) {
      csv += "," + format_number(v);
    }
    csv += "\n";
    timing += fmt::format("{},{},{},{}\n", r.axis, format_number(r.axis_value), r.estimator,
                          format_number(r.mean_time_seconds));
  }
  write_file(a.out, csv);
  write_file(a.out + ".timing.csv", timing);
  manifest.output(a.out);
  manifest.output(a.out + ".timing.csv");
  manifest.write(manifest_path(a.out, "simulate"));
  err << fmt::format("wrote {} rows to {}\n", rows.size(), a.out);
  return kOk;
}

// ---------------------------------------------------------------------------
// generate / gallery

struct GenerateArgs {
  std::string treatment = "binary", out;
  Index n = 1000;
  std::uint64_t seed = 1;
  std::uint64_t replicate = 0;
  double gamma = 1.0, eta = 0.6, tau = 0.0, epsilon = 0.01;
};

int cmd_generate(const GenerateArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream&) {
  Manifest manifest("generate", argv);
  manifest.options() = {{"treatment", a.treatment}, {"n", a.n},     {"seed", a.seed},       {"replicate", a.replicate},
                        {"gamma", a.gamma},         {"eta", a.eta}, {"tau", a.tau},         {"epsilon", a.epsilon},
                        {"out", a.out}};
  sim::ScenarioConfig c;
  c.treatment = a.treatment == "binary" ? sim::TreatmentKind::Binary : sim::TreatmentKind::Continuous;
  c.n = a.n;
  c.seed = a.seed;
  c.gamma = a.gamma;
  c.eta = a.eta;
  c.tau = a.tau;
  c.epsilon = a.epsilon;
  const sim::GeneratedData d = manifest.stage("generate", [&] { return sim::generate(c, a.replicate); });
  std::string csv = "time,event,treatment";
  for (Index k = 0; k < d.x_observed.cols(); ++k) csv += fmt::format(",x{}", k + 1);
  csv += "\n";
  for (Index i = 0; i < c.n; ++i) {
    csv += format_number(d.y(i)) + "," + std::to_string(d.delta(i)) + "," + format_number(d.a(i));
    for (Index k = 0; k < d.x_observed.cols(); ++k) csv += "," + format_number(d.x_observed(i, k));
    csv += "\n";
  }
  if (a.out.empty()) {
    out << csv;
  } else {
    write_file(a.out, csv);
    manifest.output(a.out);
  }
  manifest.write(manifest_path(a.out, "generate"));
  return kOk;
}

struct GalleryArgs {
  int kind = 1;
  int degree = 1;
  Index n = 500;
  std::uint64_t seed = 1;
  double delta = 0.001;
  std::string out;
};

int cmd_gallery(const GalleryArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream&) {
  Manifest manifest("gallery", argv);
  manifest.options() = {{"kind", a.kind}, {"degree", a.degree}, {"n", a.n},
                        {"seed", a.seed}, {"delta", a.delta},   {"out", a.out}};
  Rng rng = make_stream(a.seed, "gallery", static_cast<std::uint64_t>(a.kind));
  const auto [x, t] = sim::relationship_gallery(a.kind, a.n, rng);
  MatrixXd terms(a.n, a.degree);
  for (int p = 0; p < a.degree; ++p) terms.col(p) = x.array().pow(p + 1);
  const weights::RowResult r = manifest.stage("solve", [&] { return weights::compute_row(terms, t, a.delta); });
  if (r.solver_status == qp::Status::Infeasible) fail(kInfeasible, r.guidance);
  if (r.solver_status == qp::Status::MaxIterations) fail(kNotConverged, r.guidance);
  std::string csv = "x,a,row_weight\n";
  for (Index i = 0; i < a.n; ++i) {
    csv += fmt::format("{},{},{}\n", format_number(x(i)), format_number(t(i)), format_number(r.weights(i)));
  }
  if (a.out.empty()) {
    out << csv;
  } else {
    write_file(a.out, csv);
    manifest.output(a.out);
  }
  manifest.write(manifest_path(a.out, "gallery"));
  return kOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, bool allow_replay);

int cmd_replay(const std::string& path, std::ostream& out, std::ostream& err) {
  std::ifstream f(path);
  if (!f) fail(kInvalidInput, fmt::format("cannot open manifest '{}'", path));
  json m;
  try {
    m = json::parse(f);
  } catch (const json::exception& e) {
    fail(kInvalidInput, fmt::format("{}: {}", path, e.what()));
  }
  if (!m.contains("argv") || !m["argv"].is_array() || !m.contains("cwd")) {
    fail(kInvalidInput, fmt::format("{}: not a rowsurv manifest", path));
  }
  const std::vector<std::string> argv = m["argv"].get<std::vector<std::string>>();
  const auto previous = std::filesystem::current_path();
  std::filesystem::current_path(m["cwd"].get<std::string>());
  int code = kOther;
  try {
    code = dispatch(argv, out, err, false);
  } catch (...) {
    std::filesystem::current_path(previous);
    throw;
  }
  std::filesystem::current_path(previous);
  return code;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, bool allow_replay) {
  CLI::App app{"Robust orthogonality weights and weighted Cox estimation for survival data", "rowsurv"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  WeightsArgs wa;
  auto* weights = app.add_subcommand("weights", "Compute ROW weights for a dataset");
  weights->add_option("--input", wa.input, "Dataset CSV (time, event, treatment, covariates...)")->required();
  weights->add_option("--delta", wa.delta, "Balance tolerance on |correlation|")->check(CLI::NonNegativeNumber);
  weights->add_option("--treatment-col", wa.treatment_col, "Treatment column name");
  weights->add_option("--out", wa.out, "Output weights CSV (column row_weight)");
  weights->add_flag("--escalate", wa.escalate, "Retry with 10x and 100x delta when infeasible");
  add_solver_options(weights, wa.solver);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit the weighted Cox model of time on treatment");
  fit->add_option("--input", fa.input, "Dataset CSV")->required();
  fit->add_option("--weights", fa.weights, "Weights CSV or 'uniform'");
  fit->add_option("--se", fa.se, "Standard error used for the interval")
      ->check(CLI::IsMember({"naive", "robust", "boot"}));
  fit->add_option("--boot-reps", fa.boot_reps, "Bootstrap replicates")->check(CLI::Range(2, 1000000));
  fit->add_option("--seed", fa.seed, "Random seed for the bootstrap");
  fit->add_option("--delta", fa.delta, "ROW tolerance used inside bootstrap replicates")->check(CLI::PositiveNumber);
  fit->add_option("--threads", fa.threads, "Bootstrap worker threads")->check(CLI::PositiveNumber);
  fit->add_option("--treatment-col", fa.treatment_col, "Treatment column name");
  fit->add_option("--out", fa.out, "Also write the JSON report here");
  add_solver_options(fit, fa.solver);

  BalanceArgs ba;
  auto* bal = app.add_subcommand("balance", "Covariate balance before and after weighting");
  bal->add_option("--input", ba.input, "Dataset CSV")->required();
  bal->add_option("--weights", ba.weights, "Weights CSV or 'uniform'");
  bal->add_option("--metric", ba.metric, "asmd (binary treatment) or abscorr; default by treatment type")
      ->check(CLI::IsMember({"asmd", "abscorr"}));
  bal->add_option("--treatment-col", ba.treatment_col, "Treatment column name");
  bal->add_option("--out", ba.out, "Per-covariate CSV; a .summary.csv is written beside it");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Run a simulation sweep from a config file");
  simulate->add_option("--config", sa.config, "INI config with [scenario], [estimators], [axis]")->required();
  simulate->add_option("--axis", sa.axis, "positivity, misspecification, censoring, sample_size or num_confounders");
  simulate->add_option("--replicates", sa.replicates, "Replicates per grid point")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sa.seed, "Base seed shared by every grid point");
  simulate->add_option("--out", sa.out, "Metrics CSV")->required();
  simulate->add_option("--threads", sa.threads, "Worker threads")->check(CLI::PositiveNumber);
  simulate->add_option("--boot-reps", sa.boot_reps, "Bootstrap replicates per fit (overrides the config)")
      ->check(CLI::NonNegativeNumber);

  KmArgs ka;
  auto* km = app.add_subcommand("km", "Weighted Kaplan-Meier curves");
  km->add_option("--input", ka.input, "Dataset CSV")->required();
  km->add_option("--weights", ka.weights, "Weights CSV or 'uniform'");
  km->add_option("--group-col", ka.group_col, "0/1 column splitting the curves");
  km->add_option("--out", ka.out, "Output CSV (group, time, survival)");

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write one simulated dataset as CSV");
  gen->add_option("--treatment", ga.treatment, "binary or continuous")->check(CLI::IsMember({"binary", "continuous"}));
  gen->add_option("--n", ga.n, "Sample size")->check(CLI::Range(2, 100000000));
  gen->add_option("--seed", ga.seed, "Base seed");
  gen->add_option("--replicate", ga.replicate, "Replicate index");
  gen->add_option("--gamma", ga.gamma, "Binary treatment logit slope")->check(CLI::NonNegativeNumber);
  gen->add_option("--eta", ga.eta, "Continuous treatment noise log-sd")->check(CLI::NonNegativeNumber);
  gen->add_option("--tau", ga.tau, "Misspecification mix")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--epsilon", ga.epsilon, "Censoring rate")->check(CLI::NonNegativeNumber);
  gen->add_option("--out", ga.out, "Output CSV");

  GalleryArgs la;
  auto* gallery = app.add_subcommand("gallery", "ROW weights on a covariate-treatment relationship");
  gallery->add_option("--kind", la.kind, "Relationship 1-8")->check(CLI::Range(1, 8));
  gallery->add_option("--degree", la.degree, "Balance powers of x up to this degree")->check(CLI::Range(1, 5));
  gallery->add_option("--n", la.n, "Sample size")->check(CLI::Range(2, 100000000));
  gallery->add_option("--seed", la.seed, "Seed");
  gallery->add_option("--delta", la.delta, "Balance tolerance")->check(CLI::NonNegativeNumber);
  gallery->add_option("--out", la.out, "Output CSV (x, a, row_weight)");

  std::string manifest;
  CLI::App* replay = nullptr;
  if (allow_replay) {
    replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    replay->add_option("manifest", manifest, "Manifest JSON written by an earlier run")->required();
  }

  std::vector<const char*> cargs;
  for (const auto& s : args) cargs.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalidInput;
  }

  if (weights->parsed()) return cmd_weights(wa, args, out, err);
  if (fit->parsed()) return cmd_fit(fa, args, out, err);
  if (bal->parsed()) return cmd_balance(ba, args, out, err);
  if (simulate->parsed()) return cmd_simulate(sa, args, out, err);
  if (km->parsed()) return cmd_km(ka, args, out, err);
  if (gen->parsed()) return cmd_generate(ga, args, out, err);
  if (gallery->parsed()) return cmd_gallery(la, args, out, err);
  if (replay && replay->parsed()) return cmd_replay(manifest, out, err);
  return kInvalidInput;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err, true);
  } catch (const Failure& f) {
    err << "error: " << f.what() << "\n";
    return f.code;
  } catch (const ConstantColumn& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const CoxError& e) {
    err << "error: " << e.what() << "\n";
    return kCoxFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kOther;
  }
}

}  // namespace rowsurv::cli
