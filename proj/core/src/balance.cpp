#include "rowsurv/balance.hpp"

#include "rowsurv/errors.hpp"
#include "rowsurv/row_weights.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace rowsurv::balance {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void check_weights(const VectorXd& w, Index n) {
  if (w.size() != n) throw InvalidInput("weight vector length does not match the data");
  if (!w.allFinite() || (w.array() < 0.0).any()) {
    throw InvalidInput("weights must be finite and nonnegative");
  }
  if (!(w.sum() > 0.0)) throw InvalidInput("weights sum to zero");
}

bool is_uniform(const VectorXd& w) { return w.maxCoeff() == w.minCoeff(); }

}  // namespace

bool is_binary(const Eigen::Ref<const VectorXd>& v) {
  return ((v.array() == 0.0) || (v.array() == 1.0)).all();
}

Summary summarize(const VectorXd& values) {
  Summary s;
  if (values.size() == 0) return s;
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  s.min = v.front();
  s.max = v.back();
  s.median = m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
  return s;
}

BalanceReport asmd(const MatrixXd& x, const VectorXd& a, const VectorXd& w) {
  const Index n = a.size();
  if (x.rows() != n) throw InvalidInput("covariate matrix and treatment have different lengths");
  if (!is_binary(a)) throw InvalidInput("ASMD requires a 0/1 treatment");
  check_weights(w, n);

  double n1 = 0.0, n0 = 0.0, w1 = 0.0, w0 = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (a(i) == 1.0) {
      n1 += 1.0;
      w1 += w(i);
    } else {
      n0 += 1.0;
      w0 += w(i);
    }
  }
  if (n1 < 1.0 || n0 < 1.0) throw EmptyGroup("both treatment groups must be nonempty");
  if (!(w1 > 0.0) || !(w0 > 0.0)) throw EmptyGroup("a treatment group carries no weight");

  BalanceReport r;
  r.metric = Metric::Asmd;
  r.weighted = !is_uniform(w);
  r.per_covariate.resize(x.cols());
  for (Index k = 0; k < x.cols(); ++k) {
    double m1 = 0.0, m0 = 0.0, u1 = 0.0, u0 = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (a(i) == 1.0) {
        m1 += w(i) * x(i, k);
        u1 += x(i, k);
      } else {
        m0 += w(i) * x(i, k);
        u0 += x(i, k);
      }
    }
    const double diff = std::abs(m1 / w1 - m0 / w0);
    if (is_binary(x.col(k))) {
      r.per_covariate(k) = diff;
      continue;
    }
    u1 /= n1;
    u0 /= n0;
    double ss1 = 0.0, ss0 = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double d = a(i) == 1.0 ? x(i, k) - u1 : x(i, k) - u0;
      (a(i) == 1.0 ? ss1 : ss0) += d * d;
    }
    const double v1 = n1 > 1.0 ? ss1 / (n1 - 1.0) : 0.0;
    const double v0 = n0 > 1.0 ? ss0 / (n0 - 1.0) : 0.0;
    const double pooled = std::sqrt(0.5 * (v1 + v0));
    if (!(pooled > 0.0)) throw ConstantColumn(static_cast<std::size_t>(k));
    r.per_covariate(k) = diff / pooled;
  }
  r.summary = summarize(r.per_covariate);
  return r;
}

BalanceReport abs_corr(const MatrixXd& x, const VectorXd& a, const VectorXd& w) {
  check_weights(w, a.size());
  const weights::StandardizedDesign design = weights::standardize(x, a);
  BalanceReport r;
  r.metric = Metric::AbsCorrelation;
  r.weighted = !is_uniform(w);
  r.per_covariate = weights::weighted_correlation(design, w / w.sum()).cwiseAbs();
  r.summary = summarize(r.per_covariate);
  return r;
}

}  // namespace rowsurv::balance
