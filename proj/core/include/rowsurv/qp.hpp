#pragma once

#include <Eigen/Dense>

#include <string_view>

namespace rowsurv::qp {

/**
 * Minimum-distance weighting problem
 *
 *   minimize    ||w - c||^2
 *   subject to  |a_k^T w| <= delta_k   k = 1..m
 *               1^T w = 1,  w >= 0
 *
 * `constraint_rows` is m x n (row k holds a_k). Each two-sided constraint is
 * kept as one interval with one signed multiplier.
 */
struct QpProblem {
  Eigen::VectorXd target;           ///< c, length n, entries sum to 1
  Eigen::MatrixXd constraint_rows;  ///< m x n
  Eigen::VectorXd tolerance;        ///< delta_k >= 0, length m

  Eigen::Index size() const { return target.size(); }
  Eigen::Index num_constraints() const { return constraint_rows.rows(); }
};

/// Problem with the uniform target c = (1/n, ..., 1/n).
QpProblem centered_problem(Eigen::MatrixXd constraint_rows, Eigen::VectorXd tolerance);

/// Throws InvalidInput when the problem invariants do not hold.
void validate(const QpProblem& problem);

enum class Status { Optimal, Infeasible, MaxIterations };

std::string_view to_string(Status status);

struct SolverSettings {
  int max_iterations = 200000;
  double eps_primal = 1e-9;
  double eps_dual = 1e-9;
  /// Iterations over which a stalled, diverging dual must persist before the
  /// problem is declared infeasible.
  int infeasibility_window = 1000;
};

/// Throws InvalidInput on non-positive tolerances or iteration counts.
void validate(const SolverSettings& settings);

/**
 * Multipliers are reported for the equivalent objective (1/2)||w - c||^2:
 * loosening a binding delta_k by a small e lowers ||w - c||^2 by about
 * 2 |duals_balance_k| e. A positive multiplier means the upper bound binds,
 * a negative one the lower bound.
 */
struct QpSolution {
  Eigen::VectorXd weights;
  Status status = Status::MaxIterations;
  Eigen::VectorXd duals_balance;
  double dual_equality = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  /// True when the returned point came from the exact active-set refinement.
  bool polished = false;
};

QpSolution solve_qp(const QpProblem& problem, const SolverSettings& settings = {});

/// ||w - c||^2
double objective(const QpProblem& problem, const Eigen::VectorXd& weights);

struct KktReport {
  double stationarity = 0.0;     ///< max_i |min(w_i, g_i)|, g the Lagrangian gradient
  double primal_violation = 0.0; ///< bounds, sum-to-one and balance violations
  double complementarity = 0.0;  ///< multiplier times slack, sign errors included
  bool pass = false;
};

/// Residuals are absolute, in the units of the weights.
KktReport check_kkt(const QpProblem& problem, const QpSolution& solution, double tol);

/// Euclidean projection onto {v >= 0, sum(v) = total}.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& y, double total = 1.0);

}  // namespace rowsurv::qp
