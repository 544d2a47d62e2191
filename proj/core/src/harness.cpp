#include "rowsurv/harness.hpp"

#include "parallel.hpp"
#include "rowsurv/balance.hpp"
#include "rowsurv/errors.hpp"
#include "rowsurv/random.hpp"
#include "rowsurv/row_weights.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace rowsurv::harness {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

MatrixXd with_intercept(const MatrixXd& x) {
  MatrixXd d(x.rows(), x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  return d;
}

double logistic(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double bernoulli_loglik(const VectorXd& eta, const VectorXd& a) {
  double ll = 0.0;
  for (Index i = 0; i < eta.size(); ++i) {
    // log(1 + e^z) computed without overflow
    const double z = eta(i);
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    ll += a(i) * z - softplus;
  }
  return ll;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double max_balance(const MatrixXd& x, const VectorXd& a, const VectorXd& w, sim::TreatmentKind kind) {
  const balance::BalanceReport r = kind == sim::TreatmentKind::Binary ? balance::asmd(x, a, w)
                                                                       : balance::abs_corr(x, a, w);
  return r.summary.max;
}

}  // namespace

std::string Estimator::label() const {
  switch (type) {
    case EstimatorType::Row: {
      std::ostringstream s;
      s << "ROW(" << delta << ")";
      return s.str();
    }
    case EstimatorType::Naive:
      return "Naive";
    case EstimatorType::OutcomeModel:
      return "OM";
    case EstimatorType::IpwBinary:
    case EstimatorType::IpwContinuous:
      return stabilized ? "IPW" : "IPW-unstab";
  }
  return "?";
}

Estimator parse_estimator(const std::string& text) {
  const std::string t = lower(text);
  if (t == "naive") return Estimator::naive();
  if (t == "om") return Estimator::outcome_model();
  if (t == "ipw") return Estimator::ipw_binary(true);
  if (t == "ipw-unstab") return Estimator::ipw_binary(false);
  if (t.rfind("row", 0) == 0) {
    std::string rest = t.substr(3);
    if (rest.empty()) return Estimator::row(0.001);
    if (rest.front() == '(' && rest.back() == ')') {
      rest = rest.substr(1, rest.size() - 2);
    } else if (rest.front() == ':') {
      rest = rest.substr(1);
    } else {
      throw InvalidInput("cannot parse estimator '" + text + "'");
    }
    std::size_t used = 0;
    double delta = 0.0;
    try {
      delta = std::stod(rest, &used);
    } catch (const std::exception&) {
      throw InvalidInput("cannot parse ROW tolerance in '" + text + "'");
    }
    if (used != rest.size() || !(delta > 0.0)) {
      throw InvalidInput("ROW tolerance must be a positive number in '" + text + "'");
    }
    return Estimator::row(delta);
  }
  throw InvalidInput("unknown estimator '" + text + "' (expected ROW(delta), Naive, OM, IPW, IPW-unstab)");
}

LogisticFit fit_logistic(const MatrixXd& x, const VectorXd& a) {
  const Index n = a.size();
  if (x.rows() != n) throw InvalidInput("covariate matrix and treatment have different lengths");
  if (!balance::is_binary(a)) throw InvalidInput("logistic regression needs a 0/1 treatment");
  const double treated = a.sum();
  if (treated == 0.0 || treated == static_cast<double>(n)) {
    throw EmptyGroup("both treatment groups must be nonempty");
  }
  const MatrixXd d = with_intercept(x);
  LogisticFit fit;
  fit.coef = VectorXd::Zero(d.cols());
  VectorXd eta = VectorXd::Zero(n);
  double ll = bernoulli_loglik(eta, a);
  for (int it = 1; it <= 100; ++it) {
    VectorXd p = eta.unaryExpr([](double z) { return logistic(z); });
    const VectorXd wgt = (p.array() * (1.0 - p.array())).matrix();
    const VectorXd grad = d.transpose() * (a - p);
    const MatrixXd info = d.transpose() * wgt.asDiagonal() * d;
    const Eigen::LDLT<MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw Separation("logistic information matrix is singular; the propensity model separates the groups");
    }
    VectorXd step = ldlt.solve(grad);
    VectorXd trial = fit.coef + step;
    VectorXd trial_eta = d * trial;
    double trial_ll = bernoulli_loglik(trial_eta, a);
    for (int h = 0; h < 30 && !(trial_ll >= ll - 1e-12 * (1.0 + std::abs(ll))); ++h) {
      step *= 0.5;
      trial = fit.coef + step;
      trial_eta = d * trial;
      trial_ll = bernoulli_loglik(trial_eta, a);
    }
    fit.coef = trial;
    eta = trial_eta;
    ll = trial_ll;
    fit.iterations = it;
    if (!fit.coef.allFinite() || fit.coef.cwiseAbs().maxCoeff() > 1e4) {
      throw Separation("logistic coefficients diverge; the covariates separate the treatment groups");
    }
    if (step.cwiseAbs().maxCoeff() < 1e-10) {
      fit.fitted = eta.unaryExpr([](double z) { return logistic(z); });
      // Fitted probabilities pinned to 0 or 1 indicate (quasi-)separation.
      if (ll > -1e-8) throw Separation("logistic fit is perfect; the covariates separate the treatment groups");
      return fit;
    }
  }
  throw Separation("logistic regression did not converge in 100 iterations; likely separation");
}

VectorXd estimate_ipw_binary(const MatrixXd& x, const VectorXd& a, bool stabilized) {
  const LogisticFit fit = fit_logistic(x, a);
  const double prevalence = a.mean();
  VectorXd w(a.size());
  for (Index i = 0; i < a.size(); ++i) {
    const double p = std::clamp(fit.fitted(i), 1e-6, 1.0 - 1e-6);
    w(i) = a(i) == 1.0 ? 1.0 / p : 1.0 / (1.0 - p);
    if (stabilized) w(i) *= a(i) == 1.0 ? prevalence : 1.0 - prevalence;
  }
  return w / w.sum();
}

double normal_pdf(double x, double mean, double sd) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  const double z = (x - mean) / sd;
  return kInvSqrt2Pi / sd * std::exp(-0.5 * z * z);
}

VectorXd estimate_ipw_continuous(const MatrixXd& x, const VectorXd& a, bool stabilized) {
  const Index n = a.size();
  if (x.rows() != n) throw InvalidInput("covariate matrix and treatment have different lengths");
  const MatrixXd d = with_intercept(x);
  if (n <= d.cols()) throw InvalidInput("too few units for the treatment regression");
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(d);
  const VectorXd coef = qr.solve(a);
  const VectorXd resid = a - d * coef;
  const double dof = static_cast<double>(n - qr.rank());
  const double sigma = std::sqrt(resid.squaredNorm() / dof);
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (!(sigma > 1e-12 * scale)) {
    throw ZeroResidualVariance("treatment is an exact linear function of the covariates");
  }
  const double mean = a.mean();
  const double sd = std::sqrt((a.array() - mean).square().sum() / static_cast<double>(n - 1));
  VectorXd w(n);
  for (Index i = 0; i < n; ++i) {
    const double denom = normal_pdf(a(i), a(i) - resid(i), sigma);
    const double numer = stabilized ? normal_pdf(a(i), mean, sd) : 1.0;
    w(i) = numer / std::max(denom, std::numeric_limits<double>::min());
  }
  return w / w.sum();
}

surv::CoxFit fit_outcome_model(const VectorXd& y, const VectorXi& delta, const VectorXd& a, const MatrixXd& x,
                               const VectorXd& w) {
  if (x.rows() != a.size() && x.cols() > 0) throw InvalidInput("covariate matrix has the wrong number of rows");
  MatrixXd design(a.size(), x.cols() + 1);
  design.col(0) = a;
  if (x.cols() > 0) design.rightCols(x.cols()) = x;
  const surv::CoxModelFit m = surv::fit_cox_model(y, delta, design, w);
  surv::CoxFit fit;
  fit.theta = m.coef(0);
  fit.hazard_ratio = std::exp(fit.theta);
  fit.se_naive = m.se(0);
  fit.loglik = m.loglik;
  fit.iterations = m.iterations;
  fit.converged = m.converged;
  fit.se_robust = kNaN;
  if (x.cols() == 0 && m.converged) {
    surv::SurvivalSample s{y, delta, a, w};
    fit.se_robust = surv::sandwich_se(s, fit);
  }
  return fit;
}

ReplicateOutcome evaluate(const sim::GeneratedData& data, sim::TreatmentKind kind, const Estimator& est,
                          const RunOptions& options, std::uint64_t bootstrap_seed) {
  ReplicateOutcome out;
  out.se_boot = kNaN;
  const Index n = data.a.size();
  const VectorXd uniform = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  try {
    const auto start = std::chrono::steady_clock::now();
    VectorXd w = uniform;
    surv::CoxFit fit;
    switch (est.type) {
      case EstimatorType::Row: {
        const std::vector<double> grid{est.delta, 10.0 * est.delta, 100.0 * est.delta};
        const weights::RowResult row = weights::escalate_delta(data.x_observed, data.a, grid, options.solver);
        w = row.weights;
        out.delta_used = row.delta;
        break;
      }
      case EstimatorType::Naive:
      case EstimatorType::OutcomeModel:
        break;
      case EstimatorType::IpwBinary:
      case EstimatorType::IpwContinuous:
        w = kind == sim::TreatmentKind::Binary ? estimate_ipw_binary(data.x_observed, data.a, est.stabilized)
                                               : estimate_ipw_continuous(data.x_observed, data.a, est.stabilized);
        break;
    }
    if (est.type == EstimatorType::OutcomeModel) {
      fit = fit_outcome_model(data.y, data.delta, data.a, data.x_observed, uniform);
    } else {
      fit = surv::fit_weighted_cox(surv::SurvivalSample{data.y, data.delta, data.a, w});
    }
    out.seconds = seconds_since(start);
    if (!fit.converged) throw NotConverged("Cox fit did not converge");
    out.theta = fit.theta;
    out.se_naive = fit.se_naive;
    out.se_robust = fit.se_robust;
    out.balance = max_balance(data.x_observed, data.a, w, kind);

    const bool bootstrappable = est.type == EstimatorType::Row || est.type == EstimatorType::Naive;
    if (options.bootstrap_reps > 0 && bootstrappable) {
      const surv::BootstrapData bd{data.y, data.delta, data.a, data.x_observed};
      const auto weighting =
          est.type == EstimatorType::Row ? surv::BootstrapWeighting::Row : surv::BootstrapWeighting::Uniform;
      try {
        const surv::BootstrapCi ci = surv::bootstrap_ci(bd, out.delta_used, options.bootstrap_reps, bootstrap_seed,
                                                        fit.theta, weighting, options.solver, 1);
        out.se_boot = ci.se_boot;
      } catch (const TooManyFailures&) {
        out.se_boot = kNaN;
      }
    }
    out.ok = true;
  } catch (const Error& e) {
    out.ok = false;
    out.failure = e.what();
  }
  return out;
}

std::vector<std::vector<ReplicateOutcome>> run_replicates(const sim::ScenarioConfig& config,
                                                          const std::vector<Estimator>& estimators, int replicates,
                                                          std::uint64_t seed, const RunOptions& options) {
  if (replicates < 1) throw InvalidInput("replicates must be at least 1");
  if (estimators.empty()) throw InvalidInput("no estimators given");
  for (const Estimator& e : estimators) {
    if (e.type == EstimatorType::Row && !(e.delta > 0.0)) throw InvalidInput("ROW tolerance must be positive");
  }
  sim::ScenarioConfig cfg = config;
  cfg.seed = seed;
  sim::validate(cfg);

  std::vector<std::vector<ReplicateOutcome>> results(static_cast<std::size_t>(replicates));
  detail::parallel_for(results.size(), options.threads, [&](std::size_t r) {
    const sim::GeneratedData data = sim::generate(cfg, r);
    std::vector<ReplicateOutcome>& row = results[r];
    row.reserve(estimators.size());
    for (std::size_t k = 0; k < estimators.size(); ++k) {
      row.push_back(evaluate(data, cfg.treatment, estimators[k], options,
                             stream_seed(seed, "replicate-bootstrap", r * estimators.size() + k)));
    }
  });
  return results;
}

MetricRow aggregate(const std::vector<ReplicateOutcome>& outcomes, double theta) {
  MetricRow m;
  m.replicates = static_cast<int>(outcomes.size());
  std::vector<const ReplicateOutcome*> ok;
  for (const ReplicateOutcome& o : outcomes) {
    if (o.ok) ok.push_back(&o);
  }
  m.failures = m.replicates - static_cast<int>(ok.size());
  if (2 * m.failures > m.replicates || ok.empty()) {
    std::string msg = std::to_string(m.failures) + " of " + std::to_string(m.replicates) + " replicates failed";
    for (const ReplicateOutcome& o : outcomes) {
      if (!o.ok) {
        msg += "; first failure: " + o.failure;
        break;
      }
    }
    throw TooManyFailures(msg);
  }
  const double k = static_cast<double>(ok.size());
  double sum = 0.0, sum_hr = 0.0, sum_bal = 0.0, sum_time = 0.0;
  for (const auto* o : ok) {
    sum += o->theta;
    sum_hr += std::exp(o->theta);
    sum_bal += o->balance;
    sum_time += o->seconds;
  }
  m.mean_theta = sum / k;
  m.abs_bias = std::abs(m.mean_theta - theta);
  m.abs_bias_hr = std::abs(sum_hr / k - std::exp(theta));
  double ss = 0.0;
  for (const auto* o : ok) ss += (o->theta - m.mean_theta) * (o->theta - m.mean_theta);
  m.rmse = std::max(m.abs_bias, std::sqrt(m.abs_bias * m.abs_bias + ss / k));
  m.empirical_sd = ok.size() > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
  m.balance = sum_bal / k;
  m.mean_time_seconds = sum_time / k;

  auto coverage = [&](double ReplicateOutcome::*se, double& cov, double& ratio) {
    int used = 0, covered = 0;
    double se_sum = 0.0;
    for (const auto* o : ok) {
      const double s = o->*se;
      if (!std::isfinite(s)) continue;
      ++used;
      se_sum += s;
      if (std::abs(o->theta - theta) <= surv::kNormal975 * s) ++covered;
    }
    cov = used > 0 ? static_cast<double>(covered) / used : kNaN;
    ratio = used > 0 && se_sum > 0.0 ? m.empirical_sd / (se_sum / used) : kNaN;
  };
  coverage(&ReplicateOutcome::se_naive, m.coverage_naive, m.se_ratio_naive);
  coverage(&ReplicateOutcome::se_robust, m.coverage_robust, m.se_ratio_robust);
  coverage(&ReplicateOutcome::se_boot, m.coverage_boot, m.se_ratio_boot);
  return m;
}

std::vector<MetricRow> run_scenario(const sim::ScenarioConfig& config, const std::vector<Estimator>& estimators,
                                    int replicates, std::uint64_t seed, const RunOptions& options) {
  const auto results = run_replicates(config, estimators, replicates, seed, options);
  const std::string scenario = config.treatment == sim::TreatmentKind::Binary ? "binary" : "continuous";
  std::vector<MetricRow> rows;
  for (std::size_t k = 0; k < estimators.size(); ++k) {
    std::vector<ReplicateOutcome> column;
    column.reserve(results.size());
    for (const auto& r : results) column.push_back(r[k]);
    MetricRow m;
    try {
      m = aggregate(column, config.theta);
    } catch (const TooManyFailures& e) {
      throw TooManyFailures(estimators[k].label() + ": " + e.what());
    }
    m.scenario = scenario;
    m.estimator = estimators[k].label();
    rows.push_back(std::move(m));
  }
  return rows;
}

std::string to_string(Axis axis) {
  switch (axis) {
    case Axis::Positivity:
      return "positivity";
    case Axis::Misspecification:
      return "misspecification";
    case Axis::Censoring:
      return "censoring";
    case Axis::SampleSize:
      return "sample_size";
    case Axis::NumConfounders:
      return "num_confounders";
  }
  return "?";
}

Axis parse_axis(const std::string& text) {
  const std::string t = lower(text);
  for (Axis a : {Axis::Positivity, Axis::Misspecification, Axis::Censoring, Axis::SampleSize,
                 Axis::NumConfounders}) {
    if (t == to_string(a)) return a;
  }
  throw InvalidInput("unknown axis '" + text +
                     "' (expected positivity, misspecification, censoring, sample_size, num_confounders)");
}

sim::ScenarioConfig gaussian_config(Axis axis, sim::TreatmentKind kind) {
  sim::ScenarioConfig c;
  c.generator = sim::Generator::Gaussian;
  c.treatment = kind;
  c.gamma = 1.0;
  c.eta = 0.6;
  c.tau = 0.0;
  c.epsilon = 0.0;
  c.n = 1000;
  if (axis == Axis::NumConfounders) {
    c.confounder_beta = 0.1;
    c.confounder_gamma = 0.1;
  } else {
    c.num_confounders = 4;
    c.confounder_beta = 1.4;
    c.confounder_gamma = 1.5;
  }
  return c;
}

sim::ScenarioConfig with_axis(const sim::ScenarioConfig& base, Axis axis, double value) {
  sim::ScenarioConfig c = base;
  switch (axis) {
    case Axis::Positivity:
      (c.treatment == sim::TreatmentKind::Binary ? c.gamma : c.eta) = value;
      break;
    case Axis::Misspecification:
      c.tau = value;
      break;
    case Axis::Censoring:
      c.epsilon = value;
      break;
    case Axis::SampleSize:
      if (value != std::floor(value) || value < 2) throw InvalidInput("sample size must be an integer >= 2");
      c.generator = sim::Generator::Gaussian;
      c.n = static_cast<Index>(value);
      break;
    case Axis::NumConfounders:
      if (value != std::floor(value) || value < 1) throw InvalidInput("confounder count must be an integer >= 1");
      c.generator = sim::Generator::Gaussian;
      c.num_confounders = static_cast<int>(value);
      break;
  }
  return c;
}

std::vector<MetricRow> sweep(Axis axis, const std::vector<double>& grid, const sim::ScenarioConfig& base,
                             const std::vector<Estimator>& estimators, int replicates, std::uint64_t seed,
                             const RunOptions& options) {
  if (grid.empty()) throw InvalidInput("axis grid is empty");
  std::vector<MetricRow> table;
  for (double v : grid) {
    std::vector<MetricRow> rows = run_scenario(with_axis(base, axis, v), estimators, replicates, seed, options);
    for (MetricRow& r : rows) {
      r.axis = to_string(axis);
      r.axis_value = v;
      table.push_back(std::move(r));
    }
  }
  return table;
}

}  // namespace rowsurv::harness
