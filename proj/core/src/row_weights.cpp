#include "rowsurv/row_weights.hpp"

#include "rowsurv/errors.hpp"

#include <cmath>
#include <sstream>

namespace rowsurv::weights {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Population-convention centering and scaling; returns false for a constant vector.
bool standardize_column(const Eigen::Ref<const VectorXd>& in, Eigen::Ref<VectorXd> out,
                        double& mean, double& sd) {
  if (in.maxCoeff() == in.minCoeff()) return false;
  const double n = static_cast<double>(in.size());
  mean = in.sum() / n;
  const VectorXd centered = in.array() - mean;
  sd = std::sqrt(centered.squaredNorm() / n);
  if (!(sd > 0.0)) return false;
  out = centered / sd;
  // A second pass removes the rounding left in the mean and scale.
  const double residual_mean = out.sum() / n;
  out.array() -= residual_mean;
  const double residual_sd = std::sqrt(out.squaredNorm() / n);
  out /= residual_sd;
  return true;
}

std::string infeasible_guidance(double delta) {
  std::ostringstream msg;
  msg << "no nonnegative unit-sum weights keep every |correlation| <= " << delta
      << "; increase delta and retry";
  return msg.str();
}

}  // namespace

StandardizedDesign standardize(const MatrixXd& x, const VectorXd& a) {
  const Index n = a.size();
  if (n < 2) throw InvalidInput("at least two units are required");
  if (x.rows() != n) {
    throw InvalidInput("covariate matrix has " + std::to_string(x.rows()) + " rows but treatment has " +
                       std::to_string(n));
  }
  if (!x.allFinite() || !a.allFinite()) throw InvalidInput("design contains non-finite values");

  StandardizedDesign d;
  d.x_std.resize(n, x.cols());
  d.a_std.resize(n);
  d.x_means.resize(x.cols());
  d.x_sds.resize(x.cols());
  if (!standardize_column(a, d.a_std, d.a_mean, d.a_sd)) {
    throw ConstantColumn(ConstantColumn::kTreatment);
  }
  for (Index k = 0; k < x.cols(); ++k) {
    double mean = 0.0;
    double sd = 0.0;
    if (!standardize_column(x.col(k), d.x_std.col(k), mean, sd)) {
      throw ConstantColumn(static_cast<std::size_t>(k));
    }
    d.x_means(k) = mean;
    d.x_sds(k) = sd;
  }
  return d;
}

VectorXd weighted_correlation(const StandardizedDesign& design, const VectorXd& w) {
  if (w.size() != design.size()) {
    throw InvalidInput("weight vector length does not match the design");
  }
  return design.x_std.transpose() * (w.array() * design.a_std.array()).matrix();
}

qp::QpProblem build_problem(const StandardizedDesign& design, double delta) {
  // Row k holds x_std(i, k) * a_std(i), so that a_k' w = rho_k(w).
  MatrixXd rows = design.x_std.transpose();
  rows.array().rowwise() *= design.a_std.transpose().array();
  return qp::centered_problem(std::move(rows),
                              VectorXd::Constant(design.num_covariates(), delta));
}

double effective_sample_size(const VectorXd& w) {
  const double sq = w.squaredNorm();
  return sq > 0.0 ? (w.sum() * w.sum()) / sq : 0.0;
}

RowResult compute_row(const StandardizedDesign& design, double delta,
                      const qp::SolverSettings& settings) {
  if (!(delta >= 0.0) || !std::isfinite(delta)) {
    throw InvalidInput("delta must be a finite non-negative number");
  }
  const Index n = design.size();
  const qp::QpProblem problem = build_problem(design, delta);
  const qp::QpSolution sol = qp::solve_qp(problem, settings);

  RowResult r;
  r.delta = delta;
  r.tried_deltas.push_back(delta);
  r.weights = sol.weights;
  r.duals = sol.duals_balance;
  r.solver_status = sol.status;
  r.iterations = sol.iterations;
  r.correlations_before =
      weighted_correlation(design, VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
  r.correlations_after = weighted_correlation(design, r.weights);
  r.effective_sample_size = effective_sample_size(r.weights);
  switch (sol.status) {
    case qp::Status::Optimal:
      break;
    case qp::Status::Infeasible:
      r.guidance = infeasible_guidance(delta);
      break;
    case qp::Status::MaxIterations:
      r.guidance = "solver stopped at the iteration limit before meeting its tolerances; "
                   "raise max_iterations or increase delta";
      break;
  }
  return r;
}

RowResult compute_row(const MatrixXd& x, const VectorXd& a, double delta,
                      const qp::SolverSettings& settings) {
  return compute_row(standardize(x, a), delta, settings);
}

RowResult escalate_delta(const MatrixXd& x, const VectorXd& a, const std::vector<double>& delta_grid,
                         const qp::SolverSettings& settings) {
  if (delta_grid.empty()) throw InvalidInput("delta grid is empty");
  for (std::size_t i = 1; i < delta_grid.size(); ++i) {
    if (!(delta_grid[i] > delta_grid[i - 1])) {
      throw InvalidInput("delta grid must be strictly increasing");
    }
  }
  const StandardizedDesign design = standardize(x, a);
  std::vector<double> tried;
  for (double delta : delta_grid) {
    RowResult r = compute_row(design, delta, settings);
    tried.push_back(delta);
    if (r.optimal()) {
      r.tried_deltas = tried;
      return r;
    }
  }
  std::ostringstream msg;
  msg << "weighting problem infeasible for every delta in the grid (largest "
      << delta_grid.back() << "); increase delta";
  throw AllInfeasible(msg.str());
}

}  // namespace rowsurv::weights
