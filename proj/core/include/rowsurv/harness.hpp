#pragma once

#include "rowsurv/qp.hpp"
#include "rowsurv/simulate.hpp"
#include "rowsurv/survival.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace rowsurv::harness {

enum class EstimatorType { Row, Naive, OutcomeModel, IpwBinary, IpwContinuous };

struct Estimator {
  EstimatorType type = EstimatorType::Row;
  double delta = 0.001;     ///< ROW only, > 0
  bool stabilized = true;   ///< IPW only

  static Estimator row(double delta) { return {EstimatorType::Row, delta, true}; }
  static Estimator naive() { return {EstimatorType::Naive, 0.0, true}; }
  static Estimator outcome_model() { return {EstimatorType::OutcomeModel, 0.0, true}; }
  static Estimator ipw_binary(bool stabilized = true) { return {EstimatorType::IpwBinary, 0.0, stabilized}; }
  static Estimator ipw_continuous(bool stabilized = true) {
    return {EstimatorType::IpwContinuous, 0.0, stabilized};
  }

  /// Stable short name, e.g. "ROW(0.001)", "Naive", "OM", "IPW", "IPW-unstab".
  std::string label() const;
};

/// Parses a label produced by Estimator::label (case-insensitive, "row:0.001" also accepted).
Estimator parse_estimator(const std::string& text);

// ---------------------------------------------------------------------------
// Comparator estimators

struct LogisticFit {
  Eigen::VectorXd coef;  ///< intercept first
  Eigen::VectorXd fitted;
  int iterations = 0;
};

/// Main-effects logistic regression by Newton scoring with step halving.
/// Throws Separation when the coefficients diverge.
LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& a);

/// Inverse-propensity weights, propensities clipped to [1e-6, 1 - 1e-6],
/// optionally multiplied by the marginal prevalence; normalized to sum one.
Eigen::VectorXd estimate_ipw_binary(const Eigen::MatrixXd& x, const Eigen::VectorXd& a, bool stabilized);

double normal_pdf(double x, double mean, double sd);

/// Normal conditional-density weights from an OLS treatment model. The
/// stabilized numerator is the marginal normal density of the treatment.
/// Throws ZeroResidualVariance.
Eigen::VectorXd estimate_ipw_continuous(const Eigen::MatrixXd& x, const Eigen::VectorXd& a, bool stabilized);

/// Cox model on (treatment, covariates) with the given weights; reports the
/// treatment coefficient. With no covariates this is fit_weighted_cox.
surv::CoxFit fit_outcome_model(const Eigen::VectorXd& y, const Eigen::VectorXi& delta,
                               const Eigen::VectorXd& a, const Eigen::MatrixXd& x,
                               const Eigen::VectorXd& w);

// ---------------------------------------------------------------------------
// Scenario runs

struct RunOptions {
  int threads = 1;
  int bootstrap_reps = 0;  ///< 0 disables bootstrap SEs
  qp::SolverSettings solver;
};

/// One estimator on one replicate.
struct ReplicateOutcome {
  bool ok = false;
  std::string failure;
  double theta = 0.0;
  double se_naive = 0.0;
  double se_robust = 0.0;
  double se_boot = 0.0;  ///< NaN when not computed
  double balance = 0.0;  ///< max ASMD (binary) or max |corr| (continuous)
  double seconds = 0.0;
  double delta_used = 0.0;
};

struct MetricRow {
  std::string scenario;
  std::string axis;
  double axis_value = 0.0;
  std::string estimator;
  int replicates = 0;
  int failures = 0;
  double mean_theta = 0.0;
  double abs_bias = 0.0;
  double abs_bias_hr = 0.0;
  double rmse = 0.0;
  double empirical_sd = 0.0;
  double coverage_naive = 0.0;
  double coverage_robust = 0.0;
  double coverage_boot = 0.0;
  double se_ratio_naive = 0.0;
  double se_ratio_robust = 0.0;
  double se_ratio_boot = 0.0;
  double balance = 0.0;
  double mean_time_seconds = 0.0;
};

/// Applies one estimator to one generated data set.
ReplicateOutcome evaluate(const sim::GeneratedData& data, sim::TreatmentKind kind, const Estimator& est,
                          const RunOptions& options, std::uint64_t bootstrap_seed);

/// Outcomes per replicate (outer) and estimator (inner). Replicate r uses the
/// substreams of (seed, r), so the result does not depend on options.threads.
std::vector<std::vector<ReplicateOutcome>> run_replicates(const sim::ScenarioConfig& config,
                                                          const std::vector<Estimator>& estimators,
                                                          int replicates, std::uint64_t seed,
                                                          const RunOptions& options = {});

/// Aggregates one estimator's outcomes against the target theta.
/// Throws TooManyFailures if more than half failed.
MetricRow aggregate(const std::vector<ReplicateOutcome>& outcomes, double theta);

std::vector<MetricRow> run_scenario(const sim::ScenarioConfig& config, const std::vector<Estimator>& estimators,
                                    int replicates, std::uint64_t seed, const RunOptions& options = {});

enum class Axis { Positivity, Misspecification, Censoring, SampleSize, NumConfounders };

std::string to_string(Axis axis);
Axis parse_axis(const std::string& text);

/// Defaults of the Gaussian-confounder generator for the sample-size and
/// confounder-count sweeps.
sim::ScenarioConfig gaussian_config(Axis axis, sim::TreatmentKind kind);

/// Copy of `base` with the axis parameter set to `value`. Positivity sets
/// gamma (binary) or eta (continuous); SampleSize and NumConfounders select
/// the Gaussian generator.
sim::ScenarioConfig with_axis(const sim::ScenarioConfig& base, Axis axis, double value);

/// One run_scenario per grid point, all sharing `seed`.
std::vector<MetricRow> sweep(Axis axis, const std::vector<double>& grid, const sim::ScenarioConfig& base,
                             const std::vector<Estimator>& estimators, int replicates, std::uint64_t seed,
                             const RunOptions& options = {});

}  // namespace rowsurv::harness
