#pragma once

#include "rowsurv/qp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace rowsurv::surv {

/// Right-censored sample with one treatment column and case weights.
struct SurvivalSample {
  Eigen::VectorXd time;       ///< observed time Y = min(T, C), > 0
  Eigen::VectorXi event;      ///< 1 if the event was observed, 0 if censored
  Eigen::VectorXd treatment;  ///< binary or continuous exposure A
  Eigen::VectorXd weight;     ///< nonnegative, normalized to sum one when fitting

  Eigen::Index size() const { return time.size(); }
};

/// Sample with weights 1/n.
SurvivalSample uniform_sample(Eigen::VectorXd time, Eigen::VectorXi event, Eigen::VectorXd treatment);

/// Throws InvalidInput / NoEvents when the sample invariants fail.
void validate(const SurvivalSample& sample);

/// Weighted Breslow partial log-likelihood and its first two derivatives.
struct PartialLikelihood {
  double value = 0.0;
  double score = 0.0;        ///< d value / d theta
  double information = 0.0;  ///< -d^2 value / d theta^2
};

/// Evaluated with the weights as given (no renormalization).
PartialLikelihood partial_likelihood(const SurvivalSample& sample, double theta);

struct CoxFit {
  double theta = 0.0;
  double hazard_ratio = 1.0;
  /// Inverse observed information, with the weights rescaled to mean one.
  double se_naive = 0.0;
  double se_robust = 0.0;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

/**
 * Newton-Raphson fit of lambda(t | A) = lambda0(t) exp(theta A) maximizing the
 * weighted partial likelihood (Breslow ties, risk set {j : Y_j >= t}).
 *
 * Starts at theta = 0 and halves the step whenever the likelihood drops.
 * Converged iff |score| <= 1e-9 and the step is below 1e-9 within 50
 * iterations. Throws NonIdentifiable for a treatment that is constant among
 * positive-weight units and MonotoneLikelihood once |theta| exceeds 50.
 * Weights are normalized to sum one before fitting.
 */
CoxFit fit_weighted_cox(const SurvivalSample& sample);

/// Robust (Lin-Wei score-residual) standard error of theta, weights held fixed.
/// Invariant to a common rescaling of the weights.
double sandwich_se(const SurvivalSample& sample, const CoxFit& fit);

/// Per-unit score residuals U_i at theta (used by sandwich_se).
Eigen::VectorXd score_residuals(const SurvivalSample& sample, double theta);

// ---------------------------------------------------------------------------
// Multi-covariate Cox model (outcome-model comparator)

struct CoxModelFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd se;  ///< inverse-information standard errors, weights rescaled to mean one
  Eigen::MatrixXd information;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Same Newton scheme and safeguards as fit_weighted_cox with a design matrix
/// (n x p). With p = 1 the iterates are identical to fit_weighted_cox.
CoxModelFit fit_cox_model(const Eigen::VectorXd& time, const Eigen::VectorXi& event,
                          const Eigen::MatrixXd& design, const Eigen::VectorXd& weight);

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapCi {
  double theta = 0.0;  ///< full-sample estimate the interval is centered on
  double se_boot = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double hr_low = 0.0;
  double hr_high = 0.0;
  int replicates_used = 0;
  int replicates_failed = 0;
  std::vector<double> estimates;  ///< successful replicate estimates, in replicate order
};

/// Normal-approximation 95% quantile.
inline constexpr double kNormal975 = 1.959963984540054;

/**
 * Generic nonparametric bootstrap over row indices. `statistic` receives the
 * resampled row indices and returns the estimate, or nullopt for a failed
 * replicate. Replicate r draws from stream (seed, "bootstrap", r), so results
 * do not depend on `threads`. Throws TooManyFailures if more than B/2 fail.
 */
BootstrapCi bootstrap(Eigen::Index n, int replicates, std::uint64_t seed, double theta_hat,
                      const std::function<std::optional<double>(const std::vector<Eigen::Index>&)>& statistic,
                      int threads = 1);

/// How each bootstrap replicate reweights its resample before refitting.
enum class BootstrapWeighting { Row, Uniform };

struct BootstrapData {
  Eigen::VectorXd time;
  Eigen::VectorXi event;
  Eigen::VectorXd treatment;
  Eigen::MatrixXd covariates;
};

/// Recomputes the weights (ROW at `delta`, or uniform) on every resample and
/// refits the weighted Cox model. Infeasible weighting problems and Cox
/// failures count as failed replicates.
BootstrapCi bootstrap_ci(const BootstrapData& data, double delta, int replicates, std::uint64_t seed,
                         BootstrapWeighting weighting = BootstrapWeighting::Row,
                         const qp::SolverSettings& settings = {}, int threads = 1);

/// Overload centering the interval on an already computed estimate.
BootstrapCi bootstrap_ci(const BootstrapData& data, double delta, int replicates, std::uint64_t seed,
                         double theta_hat, BootstrapWeighting weighting,
                         const qp::SolverSettings& settings = {}, int threads = 1);

// ---------------------------------------------------------------------------
// Kaplan-Meier

struct KmPoint {
  double time = 0.0;
  double survival = 1.0;
};

struct KmCurve {
  int group = 0;  ///< group label, 0 when no grouping is used
  std::vector<KmPoint> points;  ///< starts at (0, 1), one point per distinct event time
};

/// Weighted product-limit estimator S(t) = prod (1 - d_w(t_i) / n_w(t_i)).
/// `group`, when given, must hold 0/1 labels; one curve per present label.
std::vector<KmCurve> weighted_km(const SurvivalSample& sample,
                                 const std::optional<Eigen::VectorXi>& group = std::nullopt);

}  // namespace rowsurv::surv
