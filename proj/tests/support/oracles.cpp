#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace oracle {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

QpOracleResult enumerate_kkt(const VectorXd& c, const MatrixXd& a, const VectorXd& delta) {
  const Index n = c.size();
  const Index m = a.rows();
  QpOracleResult best;
  best.objective = std::numeric_limits<double>::infinity();

  Index patterns = 1;
  for (Index k = 0; k < m; ++k) patterns *= 3;

  for (unsigned zero_mask = 0; zero_mask < (1u << n); ++zero_mask) {
    if (zero_mask == (1u << n) - 1) continue;
    for (Index pat = 0; pat < patterns; ++pat) {
      std::vector<int> side(static_cast<std::size_t>(m));
      Index code = pat;
      for (Index k = 0; k < m; ++k) {
        side[static_cast<std::size_t>(k)] = static_cast<int>(code % 3) - 1;
        code /= 3;
      }
      // Equality rows: sum w = 1, w_i = 0 for i in the mask, a_k w = side * delta_k.
      std::vector<VectorXd> rows;
      std::vector<double> rhs;
      rows.push_back(VectorXd::Ones(n));
      rhs.push_back(1.0);
      for (Index i = 0; i < n; ++i) {
        if (zero_mask & (1u << i)) {
          rows.push_back(VectorXd::Unit(n, i));
          rhs.push_back(0.0);
        }
      }
      for (Index k = 0; k < m; ++k) {
        const int s = side[static_cast<std::size_t>(k)];
        if (s == 0) continue;
        rows.push_back(a.row(k).transpose());
        rhs.push_back(s * delta(k));
      }
      const Index p = static_cast<Index>(rows.size());
      MatrixXd kkt = MatrixXd::Zero(n + p, n + p);
      VectorXd b = VectorXd::Zero(n + p);
      kkt.topLeftCorner(n, n).setIdentity();
      b.head(n) = c;
      for (Index j = 0; j < p; ++j) {
        kkt.block(0, n + j, n, 1) = rows[static_cast<std::size_t>(j)];
        kkt.block(n + j, 0, 1, n) = rows[static_cast<std::size_t>(j)].transpose();
        b(n + j) = rhs[static_cast<std::size_t>(j)];
      }
      const Eigen::FullPivLU<MatrixXd> lu(kkt);
      VectorXd sol;
      if (lu.isInvertible()) {
        sol = lu.solve(b);
      } else {
        sol = kkt.completeOrthogonalDecomposition().solve(b);
        if ((kkt * sol - b).norm() > 1e-9) continue;
      }
      const VectorXd w = sol.head(n);
      if (w.minCoeff() < -1e-12) continue;
      const VectorXd aw = a * w;
      bool ok = std::abs(w.sum() - 1.0) < 1e-10;
      for (Index k = 0; k < m && ok; ++k) ok = std::abs(aw(k)) <= delta(k) + 1e-12;
      if (!ok) continue;
      const double obj = (w - c).squaredNorm();
      if (obj < best.objective) {
        best.objective = obj;
        best.w = w;
        best.feasible = true;
      }
    }
  }
  return best;
}

double cox_loglik(const VectorXd& time, const VectorXi& event, const MatrixXd& x, const VectorXd& w,
                  const VectorXd& beta) {
  const Index n = time.size();
  const VectorXd eta = x * beta;
  double ll = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (event(i) != 1 || w(i) == 0.0) continue;
    double risk = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (time(j) >= time(i)) risk += w(j) * std::exp(eta(j));
    }
    ll += w(i) * (eta(i) - std::log(risk));
  }
  return ll;
}

double cox_grid_argmax(const VectorXd& time, const VectorXi& event, const VectorXd& a, const VectorXd& w, double lo,
                       double hi, double step) {
  const Index n = time.size();
  std::vector<std::vector<Index>> risk(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (time(j) >= time(i)) risk[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  auto loglik = [&](double theta) {
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (event(i) != 1 || w(i) == 0.0) continue;
      double r = 0.0;
      for (Index j : risk[static_cast<std::size_t>(i)]) r += w(j) * std::exp(theta * a(j));
      ll += w(i) * (theta * a(i) - std::log(r));
    }
    return ll;
  };
  // The log-likelihood is concave in theta, so scanning the fine grid only
  // next to the coarse maximizer finds the same grid point as a full scan.
  auto scan = [&](double from, double to, double h) {
    const long steps = std::lround((to - from) / h);
    double best = from;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (long s = 0; s <= steps; ++s) {
      const double theta = from + static_cast<double>(s) * h;
      const double ll = loglik(theta);
      if (ll > best_ll) {
        best_ll = ll;
        best = theta;
      }
    }
    return best;
  };
  const double coarse_step = 1000.0 * step;
  const double coarse = scan(lo, hi, coarse_step);
  const double from = std::max(lo, coarse - coarse_step);
  const double to = std::min(hi, coarse + coarse_step);
  // Align the fine window to the global grid lo + k * step.
  const double aligned = lo + std::floor((from - lo) / step + 0.5) * step;
  return scan(aligned, to, step);
}

VectorXd cox_coordinate_search(const VectorXd& time, const VectorXi& event, const MatrixXd& x, const VectorXd& w) {
  VectorXd beta = VectorXd::Zero(x.cols());
  for (double step : {0.1, 0.01, 1e-3, 1e-4, 1e-5}) {
    for (int sweep = 0; sweep < 200; ++sweep) {
      bool moved = false;
      for (Index k = 0; k < x.cols(); ++k) {
        for (;;) {
          const double here = cox_loglik(time, event, x, w, beta);
          VectorXd up = beta, down = beta;
          up(k) += step;
          down(k) -= step;
          const double lu = cox_loglik(time, event, x, w, up);
          const double ld = cox_loglik(time, event, x, w, down);
          if (lu > here && lu >= ld) {
            beta = up;
          } else if (ld > here) {
            beta = down;
          } else {
            break;
          }
          moved = true;
        }
      }
      if (!moved) break;
    }
  }
  return beta;
}

std::vector<std::pair<double, double>> classic_km(const VectorXd& time, const VectorXi& event) {
  std::map<double, std::pair<int, int>> at;  // time -> (deaths, leaving)
  for (Index i = 0; i < time.size(); ++i) {
    auto& e = at[time(i)];
    e.first += event(i);
    e.second += 1;
  }
  std::vector<std::pair<double, double>> out{{0.0, 1.0}};
  int at_risk = static_cast<int>(time.size());
  double s = 1.0;
  for (const auto& [t, e] : at) {
    if (e.first > 0) {
      s *= 1.0 - static_cast<double>(e.first) / static_cast<double>(at_risk);
      out.emplace_back(t, s);
    }
    at_risk -= e.second;
  }
  return out;
}

double pearson(const VectorXd& x, const VectorXd& y) {
  const double n = static_cast<double>(x.size());
  const double mx = x.sum() / n, my = y.sum() / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    sxy += (x(i) - mx) * (y(i) - my);
    sxx += (x(i) - mx) * (x(i) - mx);
    syy += (y(i) - my) * (y(i) - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<VectorXd> irls_logistic(const MatrixXd& x, const VectorXd& a, int iterations) {
  const Index n = x.rows();
  MatrixXd d(n, x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  VectorXd beta = VectorXd::Zero(d.cols());
  std::vector<VectorXd> path;
  for (int it = 0; it < iterations; ++it) {
    const VectorXd eta = d * beta;
    VectorXd p(n), wts(n), z(n);
    for (Index i = 0; i < n; ++i) {
      p(i) = 1.0 / (1.0 + std::exp(-eta(i)));
      wts(i) = p(i) * (1.0 - p(i));
      z(i) = eta(i) + (a(i) - p(i)) / wts(i);
    }
    // Weighted least squares of the working response on the design.
    const MatrixXd sw = wts.cwiseSqrt().asDiagonal() * d;
    const VectorXd sz = wts.cwiseSqrt().asDiagonal() * z;
    beta = sw.colPivHouseholderQr().solve(sz);
    path.push_back(beta);
  }
  return path;
}

double sample_skewness(const VectorXd& v) {
  const double n = static_cast<double>(v.size());
  const double mean = v.mean();
  double m2 = 0.0, m3 = 0.0;
  for (Index i = 0; i < v.size(); ++i) {
    const double d = v(i) - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  return m3 / std::pow(m2, 1.5);
}

}  // namespace oracle
