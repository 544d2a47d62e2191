#include "rowsurv/qp.hpp"

#include "rowsurv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace rowsurv::qp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

QpProblem centered_problem(MatrixXd constraint_rows, VectorXd tolerance) {
  QpProblem p;
  const Index n = constraint_rows.cols();
  p.target = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  p.constraint_rows = std::move(constraint_rows);
  p.tolerance = std::move(tolerance);
  return p;
}

void validate(const QpProblem& problem) {
  const Index n = problem.size();
  if (n < 2) throw InvalidInput("weighting problem needs at least two units");
  if (problem.constraint_rows.cols() != n) {
    throw InvalidInput("constraint rows have " + std::to_string(problem.constraint_rows.cols()) +
                       " columns, expected " + std::to_string(n));
  }
  if (problem.tolerance.size() != problem.num_constraints()) {
    throw InvalidInput("tolerance vector length does not match the number of constraint rows");
  }
  if (!problem.target.allFinite() || !problem.constraint_rows.allFinite() ||
      !problem.tolerance.allFinite()) {
    throw InvalidInput("weighting problem contains non-finite values");
  }
  if ((problem.tolerance.array() < 0.0).any()) {
    throw InvalidInput("balance tolerances must be non-negative");
  }
  if (std::abs(problem.target.sum() - 1.0) > 1e-10) {
    throw InvalidInput("target weights must sum to one");
  }
}

void validate(const SolverSettings& settings) {
  if (settings.max_iterations < 1) throw InvalidInput("max_iterations must be at least 1");
  if (!(settings.eps_primal > 0.0) || !(settings.eps_dual > 0.0)) {
    throw InvalidInput("solver tolerances must be positive");
  }
  if (settings.infeasibility_window < 1) {
    throw InvalidInput("infeasibility_window must be at least 1");
  }
}

std::string_view to_string(Status status) {
  switch (status) {
    case Status::Optimal:
      return "optimal";
    case Status::Infeasible:
      return "infeasible";
    case Status::MaxIterations:
      return "max_iterations";
  }
  return "unknown";
}

VectorXd project_simplex(const VectorXd& y, double total) {
  const Index n = y.size();
  std::vector<double> sorted(y.data(), y.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double shift = (sorted.front() - total);
  for (Index k = 0; k < n; ++k) {
    cumulative += sorted[static_cast<std::size_t>(k)];
    const double t = (cumulative - total) / static_cast<double>(k + 1);
    if (sorted[static_cast<std::size_t>(k)] - t > 0.0) {
      shift = t;
    } else {
      break;
    }
  }
  return (y.array() - shift).max(0.0).matrix();
}

double objective(const QpProblem& problem, const VectorXd& weights) {
  return (weights - problem.target).squaredNorm();
}

namespace {

// Problem in the variable v = n w with unit-norm constraint rows:
//   minimize 1/2 ||v - t||^2  s.t.  |A_k v| <= delta_k, sum(v) = n, v >= 0.
// Zero rows are vacuous (delta >= 0) and dropped.
struct ScaledProblem {
  Index n = 0;
  double total = 0.0;
  VectorXd target;
  MatrixXd rows;
  VectorXd delta;
  VectorXd sigma;               // rows_k = sigma_k * a_k
  std::vector<Index> original;  // index of each kept row in the input problem
};

ScaledProblem scale_problem(const QpProblem& problem) {
  ScaledProblem sp;
  sp.n = problem.size();
  sp.total = static_cast<double>(sp.n);
  sp.target = problem.target * sp.total;
  const Index m = problem.num_constraints();
  for (Index k = 0; k < m; ++k) {
    if (problem.constraint_rows.row(k).norm() > 0.0) sp.original.push_back(k);
  }
  const Index kept = static_cast<Index>(sp.original.size());
  sp.rows.resize(kept, sp.n);
  sp.delta.resize(kept);
  sp.sigma.resize(kept);
  for (Index j = 0; j < kept; ++j) {
    const Index k = sp.original[static_cast<std::size_t>(j)];
    const double norm = problem.constraint_rows.row(k).norm();
    sp.sigma(j) = 1.0 / norm;
    sp.rows.row(j) = problem.constraint_rows.row(k) * sp.sigma(j);
    sp.delta(j) = problem.tolerance(k) * sp.sigma(j) * sp.total;
  }
  return sp;
}

struct Polished {
  bool ok = false;
  VectorXd v;
  VectorXd lambda;
  double nu = 0.0;
};

// Primal-dual active-set refinement. Given a guess of the support of v and of
// the binding side of each balance row (+1 upper, -1 lower, 0 inactive), solve
// the equality-constrained projection exactly and update the guess until the
// KKT conditions hold.
Polished polish(const ScaledProblem& sp, std::vector<char> support, std::vector<int> side,
                int max_rounds) {
  constexpr double kTolV = 1e-11;
  constexpr double kTolReduced = 1e-11;
  constexpr double kTolSign = 1e-11;
  constexpr double kTolBalance = 1e-10;
  constexpr double kTolConsistency = 1e-9;

  const Index n = sp.n;
  const Index m = sp.rows.rows();
  Polished out;

  std::vector<Index> idx;
  std::vector<Index> act;
  for (int round = 0; round < max_rounds; ++round) {
    idx.clear();
    for (Index i = 0; i < n; ++i) {
      if (support[static_cast<std::size_t>(i)]) idx.push_back(i);
    }
    if (idx.empty()) return out;
    act.clear();
    for (Index k = 0; k < m; ++k) {
      if (side[static_cast<std::size_t>(k)] != 0) act.push_back(k);
    }
    const Index s = static_cast<Index>(idx.size());
    const Index p = static_cast<Index>(act.size());

    MatrixXd g(p + 1, s);
    VectorXd h(p + 1);
    VectorXd t_s(s);
    for (Index c = 0; c < s; ++c) t_s(c) = sp.target(idx[static_cast<std::size_t>(c)]);
    for (Index j = 0; j < p; ++j) {
      const Index k = act[static_cast<std::size_t>(j)];
      for (Index c = 0; c < s; ++c) g(j, c) = sp.rows(k, idx[static_cast<std::size_t>(c)]);
      h(j) = side[static_cast<std::size_t>(k)] > 0 ? sp.delta(k) : -sp.delta(k);
    }
    g.row(p).setOnes();
    h(p) = sp.total;

    const MatrixXd gram = g * g.transpose();
    const VectorXd mu = gram.completeOrthogonalDecomposition().solve(g * t_s - h);
    const VectorXd v_s = t_s - g.transpose() * mu;

    // Rows that cannot be met on this support are dropped from the active set.
    const VectorXd mismatch = g * v_s - h;
    bool inconsistent = false;
    for (Index j = 0; j < p; ++j) {
      if (std::abs(mismatch(j)) > kTolConsistency * std::max(1.0, std::abs(h(j)))) {
        side[static_cast<std::size_t>(act[static_cast<std::size_t>(j)])] = 0;
        inconsistent = true;
      }
    }
    if (std::abs(mismatch(p)) > kTolConsistency * sp.total) return out;
    if (inconsistent) continue;

    VectorXd v = VectorXd::Zero(n);
    for (Index c = 0; c < s; ++c) v(idx[static_cast<std::size_t>(c)]) = v_s(c);
    VectorXd lambda = VectorXd::Zero(m);
    for (Index j = 0; j < p; ++j) lambda(act[static_cast<std::size_t>(j)]) = mu(j);
    const double nu = mu(p);

    const VectorXd reduced = (sp.rows.transpose() * lambda).array() + nu - sp.target.array();
    const VectorXd av = sp.rows * v;

    bool optimal = true;
    std::vector<char> next_support = support;
    std::vector<int> next_side = side;
    for (Index i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (support[ui]) {
        if (v(i) < -kTolV) {
          optimal = false;
          next_support[ui] = 0;
        }
      } else if (reduced(i) < -kTolReduced) {
        optimal = false;
        next_support[ui] = 1;
      }
    }
    for (Index k = 0; k < m; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      if (side[uk] != 0) {
        if (sp.delta(k) > 0.0 && side[uk] * lambda(k) < -kTolSign) {
          optimal = false;
          next_side[uk] = 0;
        }
      } else if (std::abs(av(k)) > sp.delta(k) + kTolBalance) {
        optimal = false;
        next_side[uk] = av(k) > 0.0 ? 1 : -1;
      }
    }
    if (optimal) {
      out.ok = true;
      out.v = v.cwiseMax(0.0);
      out.lambda = std::move(lambda);
      out.nu = nu;
      return out;
    }
    if (next_support == support && next_side == side) return out;
    support = std::move(next_support);
    side = std::move(next_side);
  }
  return out;
}

// A direction d with n * min_i (A^T d)_i > sum_k |d_k| delta_k separates
// A(simplex) from the balance box, which proves infeasibility.
bool certifies_infeasible(const ScaledProblem& sp, const VectorXd& d) {
  if (d.size() == 0 || !(d.norm() > 0.0)) return false;
  const VectorXd q = sp.rows.transpose() * d;
  const double scale = q.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) return false;
  const double margin = sp.total * q.minCoeff() - d.cwiseAbs().dot(sp.delta);
  return margin > 1e-9 * sp.total * scale;
}

class Admm {
 public:
  Admm(const ScaledProblem& sp, const SolverSettings& settings)
      : sp_(sp), settings_(settings), m_(sp.rows.rows()) {
    gram_ = sp_.rows * sp_.rows.transpose();
    v_ = VectorXd::Constant(sp_.n, 1.0);
    z1_ = project_simplex(sp_.target, sp_.total);
    u1_ = VectorXd::Zero(sp_.n);
    z2_ = (sp_.rows * z1_).cwiseMax(-sp_.delta).cwiseMin(sp_.delta);
    u2_ = VectorXd::Zero(m_);
    factor();
  }

  void step() {
    VectorXd rhs = sp_.target + rho_ * (z1_ - u1_);
    if (m_ > 0) rhs.noalias() += rho_ * (sp_.rows.transpose() * (z2_ - u2_));
    const double alpha = 1.0 + rho_;
    if (m_ > 0) {
      const VectorXd inner = factor_.solve(sp_.rows * rhs);
      v_ = (rhs - sp_.rows.transpose() * inner) / alpha;
    } else {
      v_ = rhs / alpha;
    }
    const VectorXd av = m_ > 0 ? VectorXd(sp_.rows * v_) : VectorXd(0);

    const VectorXd v_relaxed = kRelax * v_ + (1.0 - kRelax) * z1_;
    const VectorXd av_relaxed = kRelax * av + (1.0 - kRelax) * z2_;

    const VectorXd z1_prev = z1_;
    const VectorXd z2_prev = z2_;
    z1_ = project_simplex(v_relaxed + u1_, sp_.total);
    z2_ = (av_relaxed + u2_).cwiseMax(-sp_.delta).cwiseMin(sp_.delta);
    u1_ += v_relaxed - z1_;
    u2_ += av_relaxed - z2_;

    primal_ = (v_ - z1_).cwiseAbs().maxCoeff();
    if (m_ > 0) primal_ = std::max(primal_, (av - z2_).cwiseAbs().maxCoeff());
    VectorXd change = z1_ - z1_prev;
    if (m_ > 0) change.noalias() += sp_.rows.transpose() * (z2_ - z2_prev);
    dual_ = rho_ * change.cwiseAbs().maxCoeff();
  }

  bool converged() const {
    const double scale_p = std::max(1.0, z1_.cwiseAbs().maxCoeff());
    const double scale_d = std::max(1.0, rho_ * u1_.cwiseAbs().maxCoeff());
    return primal_ <= settings_.eps_primal * scale_p && dual_ <= settings_.eps_dual * scale_d;
  }

  void adapt_rho() {
    const double scale_p = std::max(1.0, z1_.cwiseAbs().maxCoeff());
    const double scale_d = std::max(1.0, rho_ * u1_.cwiseAbs().maxCoeff());
    const double rp = primal_ / scale_p;
    const double rd = dual_ / scale_d;
    if (!(rp > 0.0) || !(rd > 0.0)) return;
    const double ratio = std::sqrt(rp / rd);
    if (ratio < 5.0 && ratio > 0.2) return;
    const double next = std::clamp(rho_ * ratio, 1e-6, 1e6);
    if (next == rho_) return;
    u1_ *= rho_ / next;
    u2_ *= rho_ / next;
    rho_ = next;
    factor();
  }

  // Active-set guess from the current iterate.
  void guess(std::vector<char>& support, std::vector<int>& side) const {
    support.assign(static_cast<std::size_t>(sp_.n), 0);
    for (Index i = 0; i < sp_.n; ++i) support[static_cast<std::size_t>(i)] = z1_(i) > 0.0;
    side.assign(static_cast<std::size_t>(m_), 0);
    for (Index k = 0; k < m_; ++k) {
      const double slack = 1e-9 * std::max(1.0, sp_.delta(k));
      if (z2_(k) >= sp_.delta(k) - slack && u2_(k) > 0.0) {
        side[static_cast<std::size_t>(k)] = 1;
      } else if (z2_(k) <= -sp_.delta(k) + slack && u2_(k) < 0.0) {
        side[static_cast<std::size_t>(k)] = -1;
      }
    }
  }

  VectorXd balance_dual() const { return rho_ * u2_; }
  const VectorXd& z1() const { return z1_; }
  double primal() const { return primal_; }
  double dual() const { return dual_; }

 private:
  static constexpr double kRelax = 1.6;

  void factor() {
    if (m_ == 0) return;
    const double alpha = 1.0 + rho_;
    MatrixXd mat = gram_;
    mat.diagonal().array() += alpha / rho_;
    factor_.compute(mat);
  }

  const ScaledProblem& sp_;
  const SolverSettings& settings_;
  Index m_;
  MatrixXd gram_;
  Eigen::LDLT<MatrixXd> factor_;
  double rho_ = 1.0;
  VectorXd v_, z1_, u1_, z2_, u2_;
  double primal_ = std::numeric_limits<double>::infinity();
  double dual_ = std::numeric_limits<double>::infinity();
};

// Maps a scaled-space point and multipliers back to the caller's units and
// applies the final nonnegativity clean-up.
QpSolution unscale(const QpProblem& problem, const ScaledProblem& sp, const VectorXd& v,
                   const VectorXd& lambda, double nu) {
  QpSolution sol;
  const double n = sp.total;
  VectorXd w = v / n;
  for (Index i = 0; i < w.size(); ++i) {
    if (w(i) < 0.0 && w(i) >= -1e-10) w(i) = 0.0;
  }
  const double sum = w.sum();
  if (sum > 0.0) w /= sum;
  sol.weights = std::move(w);
  sol.duals_balance = VectorXd::Zero(problem.num_constraints());
  for (std::size_t j = 0; j < sp.original.size(); ++j) {
    const auto jj = static_cast<Index>(j);
    sol.duals_balance(sp.original[j]) = lambda(jj) * sp.sigma(jj) / n;
  }
  sol.dual_equality = nu / n;
  return sol;
}

// Equality multiplier implied by stationarity on the support.
double implied_nu(const ScaledProblem& sp, const VectorXd& v, const VectorXd& lambda) {
  const VectorXd grad = (v - sp.target) + sp.rows.transpose() * lambda;
  double sum = 0.0;
  Index count = 0;
  for (Index i = 0; i < v.size(); ++i) {
    if (v(i) > 0.0) {
      sum -= grad(i);
      ++count;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

void fill_residuals(const QpProblem& problem, QpSolution& sol) {
  const KktReport report = check_kkt(problem, sol, 0.0);
  sol.primal_residual = report.primal_violation;
  sol.dual_residual = report.stationarity;
}

}  // namespace

QpSolution solve_qp(const QpProblem& problem, const SolverSettings& settings) {
  validate(problem);
  validate(settings);

  const ScaledProblem sp = scale_problem(problem);
  const Index m = sp.rows.rows();
  constexpr int kCheckEvery = 25;
  constexpr int kPolishRounds = 50;

  // The unweighted target may already be optimal; this also covers m == 0.
  {
    const VectorXd start = project_simplex(sp.target, sp.total);
    if (m == 0 || ((sp.rows * start).cwiseAbs().array() <= sp.delta.array()).all()) {
      std::vector<char> support(static_cast<std::size_t>(sp.n));
      for (Index i = 0; i < sp.n; ++i) support[static_cast<std::size_t>(i)] = start(i) > 0.0;
      const Polished p = polish(sp, support, std::vector<int>(static_cast<std::size_t>(m), 0),
                                kPolishRounds);
      if (p.ok) {
        QpSolution sol = unscale(problem, sp, p.v, p.lambda, p.nu);
        sol.status = Status::Optimal;
        sol.polished = true;
        fill_residuals(problem, sol);
        return sol;
      }
    }
  }

  Admm admm(sp, settings);
  std::vector<char> support, last_support;
  std::vector<int> side, last_side;
  VectorXd window_dual = admm.balance_dual();
  double window_primal = std::numeric_limits<double>::infinity();

  int iter = 0;
  while (iter < settings.max_iterations) {
    admm.step();
    ++iter;

    const bool done = admm.converged();
    if (done || iter % kCheckEvery == 0) {
      admm.guess(support, side);
      if (done || support != last_support || side != last_side) {
        const Polished p = polish(sp, support, side, kPolishRounds);
        if (p.ok) {
          QpSolution sol = unscale(problem, sp, p.v, p.lambda, p.nu);
          sol.status = Status::Optimal;
          sol.polished = true;
          sol.iterations = iter;
          fill_residuals(problem, sol);
          return sol;
        }
        last_support = support;
        last_side = side;
      }
      if (done) {
        const VectorXd lambda = admm.balance_dual();
        QpSolution sol = unscale(problem, sp, admm.z1(), lambda, implied_nu(sp, admm.z1(), lambda));
        sol.status = Status::Optimal;
        sol.iterations = iter;
        fill_residuals(problem, sol);
        return sol;
      }
      admm.adapt_rho();
    }

    if (iter % settings.infeasibility_window == 0) {
      const VectorXd dual_now = admm.balance_dual();
      const VectorXd drift = dual_now - window_dual;
      const bool stalled = admm.primal() > 0.5 * window_primal;
      if (stalled && (certifies_infeasible(sp, drift) || certifies_infeasible(sp, -drift))) {
        QpSolution sol = unscale(problem, sp, admm.z1(), VectorXd::Zero(m), 0.0);
        sol.status = Status::Infeasible;
        sol.iterations = iter;
        fill_residuals(problem, sol);
        return sol;
      }
      window_dual = dual_now;
      window_primal = admm.primal();
    }
  }

  const VectorXd lambda = admm.balance_dual();
  QpSolution sol = unscale(problem, sp, admm.z1(), lambda, implied_nu(sp, admm.z1(), lambda));
  sol.status = Status::MaxIterations;
  sol.iterations = iter;
  fill_residuals(problem, sol);
  return sol;
}

KktReport check_kkt(const QpProblem& problem, const QpSolution& solution, double tol) {
  const Index n = problem.size();
  const Index m = problem.num_constraints();
  if (solution.weights.size() != n || solution.duals_balance.size() != m) {
    throw InvalidInput("solution dimensions do not match the problem");
  }
  const VectorXd& w = solution.weights;
  const VectorXd& lambda = solution.duals_balance;
  const VectorXd aw = problem.constraint_rows * w;

  KktReport r;
  const VectorXd grad =
      (w - problem.target) + problem.constraint_rows.transpose() * lambda +
      VectorXd::Constant(n, solution.dual_equality);
  for (Index i = 0; i < n; ++i) {
    r.stationarity = std::max(r.stationarity, std::abs(std::min(w(i), grad(i))));
    r.primal_violation = std::max(r.primal_violation, -w(i));
  }
  r.primal_violation = std::max(r.primal_violation, std::abs(w.sum() - 1.0));
  for (Index k = 0; k < m; ++k) {
    const double delta = problem.tolerance(k);
    r.primal_violation = std::max(r.primal_violation, std::abs(aw(k)) - delta);
    if (lambda(k) > 0.0) {
      r.complementarity = std::max(r.complementarity, lambda(k) * std::abs(delta - aw(k)));
    } else if (lambda(k) < 0.0) {
      r.complementarity = std::max(r.complementarity, -lambda(k) * std::abs(delta + aw(k)));
    }
  }
  r.primal_violation = std::max(r.primal_violation, 0.0);
  r.pass = r.stationarity <= tol && r.primal_violation <= tol && r.complementarity <= tol;
  return r;
}

}  // namespace rowsurv::qp
