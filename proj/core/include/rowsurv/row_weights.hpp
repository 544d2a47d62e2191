#pragma once

#include "rowsurv/qp.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace rowsurv::weights {

/// Covariates and treatment centered and scaled with population (divisor n)
/// moments, so that with uniform weights the mean product of a covariate
/// column and the treatment is exactly their Pearson correlation.
struct StandardizedDesign {
  Eigen::MatrixXd x_std;  ///< n x m
  Eigen::VectorXd a_std;  ///< n
  Eigen::VectorXd x_means;
  Eigen::VectorXd x_sds;
  double a_mean = 0.0;
  double a_sd = 1.0;

  Eigen::Index size() const { return a_std.size(); }
  Eigen::Index num_covariates() const { return x_std.cols(); }
};

/// Throws ConstantColumn for a zero-variance column or treatment and
/// InvalidInput for dimension problems.
StandardizedDesign standardize(const Eigen::MatrixXd& x, const Eigen::VectorXd& a);

/// rho_k(w) = sum_i w_i x_std(i, k) a_std(i), one entry per covariate.
Eigen::VectorXd weighted_correlation(const StandardizedDesign& design, const Eigen::VectorXd& w);

/// The weighting problem for `design`: row k is x_std(:, k) .* a_std.
qp::QpProblem build_problem(const StandardizedDesign& design, double delta);

struct RowResult {
  Eigen::VectorXd weights;
  double delta = 0.0;
  Eigen::VectorXd correlations_before;
  Eigen::VectorXd correlations_after;
  Eigen::VectorXd duals;
  qp::Status solver_status = qp::Status::MaxIterations;
  double effective_sample_size = 0.0;
  int iterations = 0;
  std::vector<double> tried_deltas;
  /// Empty when optimal; otherwise what the caller should do next.
  std::string guidance;

  bool optimal() const { return solver_status == qp::Status::Optimal; }
};

/// Minimum-variance weights with |rho_k(w)| <= delta for every covariate.
/// A non-optimal solve is reported through `solver_status` and `guidance`.
RowResult compute_row(const Eigen::MatrixXd& x, const Eigen::VectorXd& a, double delta,
                      const qp::SolverSettings& settings = {});

/// Same as compute_row on an already standardized design.
RowResult compute_row(const StandardizedDesign& design, double delta,
                      const qp::SolverSettings& settings = {});

/// Tries each tolerance of an increasing grid and returns the first optimal
/// result. Throws AllInfeasible when the grid is exhausted.
RowResult escalate_delta(const Eigen::MatrixXd& x, const Eigen::VectorXd& a,
                         const std::vector<double>& delta_grid,
                         const qp::SolverSettings& settings = {});

/// 1 / sum(w^2) for unit-sum weights.
double effective_sample_size(const Eigen::VectorXd& w);

}  // namespace rowsurv::weights
