#pragma once

// Independent reference implementations used only by the tests. None of them
// share code with the library; they trade speed for directness.

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace oracle {

struct QpOracleResult {
  bool feasible = false;
  Eigen::VectorXd w;
  double objective = 0.0;
};

/// Minimizes ||w - c||^2 subject to |A w| <= delta, sum w = 1, w >= 0 by
/// enumerating every zero pattern of w and every (inactive, upper, lower)
/// pattern of the balance rows, solving each equality-constrained problem
/// through its full KKT matrix and keeping the best feasible candidate.
/// Intended for n <= 8 and m <= 3.
QpOracleResult enumerate_kkt(const Eigen::VectorXd& c, const Eigen::MatrixXd& a, const Eigen::VectorXd& delta);

/// Weighted Breslow partial log-likelihood by the O(n^2) textbook double sum.
double cox_loglik(const Eigen::VectorXd& time, const Eigen::VectorXi& event, const Eigen::MatrixXd& x,
                  const Eigen::VectorXd& w, const Eigen::VectorXd& beta);

/// argmax over theta in [lo, hi] on a uniform grid with the given step.
double cox_grid_argmax(const Eigen::VectorXd& time, const Eigen::VectorXi& event, const Eigen::VectorXd& a,
                       const Eigen::VectorXd& w, double lo = -10.0, double hi = 10.0, double step = 1e-5);

/// Coordinate-wise grid refinement for a multi-covariate Cox model.
Eigen::VectorXd cox_coordinate_search(const Eigen::VectorXd& time, const Eigen::VectorXi& event,
                                      const Eigen::MatrixXd& x, const Eigen::VectorXd& w);

/// Count-based Kaplan-Meier: S after each distinct event time, starting at (0, 1).
std::vector<std::pair<double, double>> classic_km(const Eigen::VectorXd& time, const Eigen::VectorXi& event);

/// Textbook Pearson correlation.
double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Logistic regression (with intercept) by iteratively reweighted least
/// squares; returns the coefficient after each iteration.
std::vector<Eigen::VectorXd> irls_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& a, int iterations);

double sample_skewness(const Eigen::VectorXd& v);

}  // namespace oracle
