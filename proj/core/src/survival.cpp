#include "rowsurv/survival.hpp"

#include "parallel.hpp"
#include "rowsurv/errors.hpp"
#include "rowsurv/random.hpp"
#include "rowsurv/row_weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rowsurv::surv {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

namespace {

constexpr int kMaxNewton = 50;
constexpr int kMaxHalvings = 30;
constexpr double kScoreTol = 1e-9;
constexpr double kStepTol = 1e-9;
constexpr double kThetaCap = 50.0;

void validate_arrays(const VectorXd& time, const VectorXi& event, Index n_other, const VectorXd& weight,
                     bool require_event = true) {
  const Index n = time.size();
  if (n < 1) throw InvalidInput("survival sample is empty");
  if (event.size() != n || n_other != n || weight.size() != n) {
    throw InvalidInput("survival sample columns have different lengths");
  }
  if (!time.allFinite() || (time.array() <= 0.0).any()) {
    throw InvalidInput("observed times must be finite and strictly positive");
  }
  if (((event.array() != 0) && (event.array() != 1)).any()) {
    throw InvalidInput("event indicators must be 0 or 1");
  }
  if (!weight.allFinite() || (weight.array() < 0.0).any()) {
    throw InvalidInput("weights must be finite and nonnegative");
  }
  if (!(weight.sum() > 0.0)) throw InvalidInput("weights sum to zero");
  if (!require_event) return;
  bool any_event = false;
  for (Index i = 0; i < n; ++i) any_event = any_event || (event(i) == 1 && weight(i) > 0.0);
  if (!any_event) throw NoEvents("no event carries positive weight");
}

// Indices sorted by time, ties in index order.
std::vector<Index> time_order(const VectorXd& time) {
  std::vector<Index> order(static_cast<std::size_t>(time.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return time(a) < time(b); });
  return order;
}

struct Evaluation {
  double value = 0.0;
  VectorXd gradient;
  MatrixXd information;
};

// Weighted Breslow partial likelihood for a design matrix. Risk-set sums are
// accumulated from the largest time down; all units tied at t enter the risk
// set before the events at t contribute.
class PartialLikelihoodEngine {
 public:
  PartialLikelihoodEngine(const VectorXd& time, const VectorXi& event, const MatrixXd& design,
                          const VectorXd& weight)
      : time_(time), event_(event), design_(design), weight_(weight), order_(time_order(time)) {}

  Evaluation evaluate(const VectorXd& beta, bool derivatives = true) const {
    const Index n = time_.size();
    const Index p = design_.cols();
    const VectorXd eta = design_ * beta;
    double shift = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
      if (weight_(i) > 0.0) shift = std::max(shift, eta(i));
    }

    Evaluation out;
    out.gradient = VectorXd::Zero(p);
    out.information = MatrixXd::Zero(p, p);
    double s0 = 0.0;
    VectorXd s1 = VectorXd::Zero(p);
    MatrixXd s2 = MatrixXd::Zero(p, p);
    VectorXd event_x(p);

    Index pos = n;
    while (pos > 0) {
      const double t = time_(order_[static_cast<std::size_t>(pos - 1)]);
      Index start = pos;
      while (start > 0 && time_(order_[static_cast<std::size_t>(start - 1)]) == t) --start;

      double d = 0.0;
      double event_eta = 0.0;
      event_x.setZero();
      for (Index q = start; q < pos; ++q) {
        const Index i = order_[static_cast<std::size_t>(q)];
        const double w = weight_(i);
        if (w <= 0.0) continue;
        const double r = w * std::exp(eta(i) - shift);
        s0 += r;
        if (derivatives) {
          s1.noalias() += r * design_.row(i).transpose();
          s2.noalias() += r * design_.row(i).transpose() * design_.row(i);
        }
        if (event_(i) == 1) {
          d += w;
          event_eta += w * eta(i);
          if (derivatives) event_x.noalias() += w * design_.row(i).transpose();
        }
      }
      if (d > 0.0) {
        out.value += event_eta - d * (shift + std::log(s0));
        if (derivatives) {
          const VectorXd mean = s1 / s0;
          out.gradient.noalias() += event_x - d * mean;
          out.information.noalias() += d * (s2 / s0 - mean * mean.transpose());
        }
      }
      pos = start;
    }
    return out;
  }

 private:
  const VectorXd& time_;
  const VectorXi& event_;
  const MatrixXd& design_;
  const VectorXd& weight_;
  std::vector<Index> order_;
};

// For a single covariate the likelihood has a finite maximizer iff some event
// sits below the maximum of its risk set and some event sits above the minimum.
void check_single_covariate(const VectorXd& time, const VectorXi& event, const VectorXd& x,
                            const VectorXd& weight) {
  const Index n = time.size();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) {
    if (weight(i) > 0.0) {
      lo = std::min(lo, x(i));
      hi = std::max(hi, x(i));
    }
  }
  if (!(hi > lo)) {
    throw NonIdentifiable("treatment is constant among units with positive weight; "
                          "the partial likelihood is flat");
  }

  const std::vector<Index> order = time_order(time);
  double risk_min = std::numeric_limits<double>::infinity();
  double risk_max = -std::numeric_limits<double>::infinity();
  bool below_max = false;
  bool above_min = false;
  Index pos = n;
  while (pos > 0) {
    const double t = time(order[static_cast<std::size_t>(pos - 1)]);
    Index start = pos;
    while (start > 0 && time(order[static_cast<std::size_t>(start - 1)]) == t) --start;
    for (Index q = start; q < pos; ++q) {
      const Index i = order[static_cast<std::size_t>(q)];
      if (weight(i) <= 0.0) continue;
      risk_min = std::min(risk_min, x(i));
      risk_max = std::max(risk_max, x(i));
    }
    for (Index q = start; q < pos; ++q) {
      const Index i = order[static_cast<std::size_t>(q)];
      if (weight(i) <= 0.0 || event(i) != 1) continue;
      below_max = below_max || x(i) < risk_max;
      above_min = above_min || x(i) > risk_min;
    }
    pos = start;
  }
  if (!below_max && !above_min) {
    throw NonIdentifiable("treatment is constant within every event risk set; "
                          "the partial likelihood is flat");
  }
  if (!below_max || !above_min) {
    throw MonotoneLikelihood("partial likelihood is monotone in theta (complete separation "
                             "in the risk sets); the estimate diverges");
  }
}

struct NewtonResult {
  VectorXd beta;
  Evaluation at;
  int iterations = 0;
  bool converged = false;
};

NewtonResult newton(const PartialLikelihoodEngine& engine, Index p) {
  NewtonResult r;
  r.beta = VectorXd::Zero(p);
  r.at = engine.evaluate(r.beta);
  for (int it = 0; it < kMaxNewton; ++it) {
    const Eigen::LDLT<MatrixXd> ldlt(r.at.information);
    const bool usable = ldlt.info() == Eigen::Success && ldlt.isPositive() &&
                        (ldlt.vectorD().array() > 0.0).all();
    if (!usable) {
      if (r.at.gradient.cwiseAbs().maxCoeff() <= kScoreTol) {
        throw NonIdentifiable("partial likelihood information is singular at the optimum");
      }
      throw MonotoneLikelihood("partial likelihood information vanished while the score did not; "
                               "the estimate diverges");
    }
    VectorXd step = ldlt.solve(r.at.gradient);
    if (!step.allFinite()) {
      throw MonotoneLikelihood("Newton step is not finite; the estimate diverges");
    }
    if (r.at.gradient.cwiseAbs().maxCoeff() <= kScoreTol && step.cwiseAbs().maxCoeff() < kStepTol) {
      r.converged = true;
      r.iterations = it;
      return r;
    }
    VectorXd trial = r.beta + step;
    Evaluation next = engine.evaluate(trial);
    const double floor = r.at.value - 1e-12 * (1.0 + std::abs(r.at.value));
    for (int h = 0; h < kMaxHalvings && !(next.value >= floor); ++h) {
      step *= 0.5;
      trial = r.beta + step;
      next = engine.evaluate(trial);
    }
    r.beta = std::move(trial);
    r.at = std::move(next);
    r.iterations = it + 1;
    if (r.beta.cwiseAbs().maxCoeff() > kThetaCap) {
      throw MonotoneLikelihood("|coefficient| exceeded 50 with a nonzero score; "
                               "the partial likelihood appears monotone");
    }
  }
  // Final convergence check at the last iterate.
  const Eigen::LDLT<MatrixXd> ldlt(r.at.information);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    const VectorXd step = ldlt.solve(r.at.gradient);
    r.converged = r.at.gradient.cwiseAbs().maxCoeff() <= kScoreTol &&
                  step.cwiseAbs().maxCoeff() < kStepTol;
  }
  return r;
}

VectorXd normalized(const VectorXd& w) { return w / w.sum(); }

}  // namespace

SurvivalSample uniform_sample(VectorXd time, VectorXi event, VectorXd treatment) {
  SurvivalSample s;
  const Index n = time.size();
  s.time = std::move(time);
  s.event = std::move(event);
  s.treatment = std::move(treatment);
  s.weight = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  return s;
}

void validate(const SurvivalSample& sample) {
  validate_arrays(sample.time, sample.event, sample.treatment.size(), sample.weight);
  if (!sample.treatment.allFinite()) throw InvalidInput("treatment contains non-finite values");
}

PartialLikelihood partial_likelihood(const SurvivalSample& sample, double theta) {
  validate(sample);
  const MatrixXd design = sample.treatment;
  const PartialLikelihoodEngine engine(sample.time, sample.event, design, sample.weight);
  const Evaluation e = engine.evaluate(VectorXd::Constant(1, theta));
  return {e.value, e.gradient(0), e.information(0, 0)};
}

CoxFit fit_weighted_cox(const SurvivalSample& sample) {
  validate(sample);
  const VectorXd w = normalized(sample.weight);
  const MatrixXd design = sample.treatment;
  check_single_covariate(sample.time, sample.event, sample.treatment, w);

  const PartialLikelihoodEngine engine(sample.time, sample.event, design, w);
  const NewtonResult nr = newton(engine, 1);

  CoxFit fit;
  fit.theta = nr.beta(0);
  fit.hazard_ratio = std::exp(fit.theta);
  fit.loglik = nr.at.value;
  fit.iterations = nr.iterations;
  fit.converged = nr.converged;
  const double info = nr.at.information(0, 0);
  const double n = static_cast<double>(sample.size());
  fit.se_naive = info > 0.0 ? 1.0 / std::sqrt(n * info) : std::numeric_limits<double>::quiet_NaN();
  if (fit.converged) {
    SurvivalSample normalized_sample = sample;
    normalized_sample.weight = w;
    fit.se_robust = sandwich_se(normalized_sample, fit);
  } else {
    fit.se_robust = std::numeric_limits<double>::quiet_NaN();
  }
  return fit;
}

VectorXd score_residuals(const SurvivalSample& sample, double theta) {
  validate(sample);
  const Index n = sample.size();
  const VectorXd& a = sample.treatment;
  const VectorXd& w = sample.weight;
  const std::vector<Index> order = time_order(sample.time);

  double shift = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) {
    if (w(i) > 0.0) shift = std::max(shift, theta * a(i));
  }
  VectorXd risk(n);
  for (Index i = 0; i < n; ++i) risk(i) = std::exp(theta * a(i) - shift);

  // Per tie group (ascending time): weighted event mass, risk-set mean, S0.
  struct Group {
    Index start, end;
    double d, mean, s0;
  };
  std::vector<Group> groups;
  {
    double s0 = 0.0;
    double s1 = 0.0;
    Index pos = n;
    while (pos > 0) {
      const double t = sample.time(order[static_cast<std::size_t>(pos - 1)]);
      Index start = pos;
      while (start > 0 && sample.time(order[static_cast<std::size_t>(start - 1)]) == t) --start;
      double d = 0.0;
      for (Index q = start; q < pos; ++q) {
        const Index i = order[static_cast<std::size_t>(q)];
        if (w(i) <= 0.0) continue;
        s0 += w(i) * risk(i);
        s1 += w(i) * risk(i) * a(i);
        if (sample.event(i) == 1) d += w(i);
      }
      groups.push_back({start, pos, d, s0 > 0.0 ? s1 / s0 : 0.0, s0});
      pos = start;
    }
    std::reverse(groups.begin(), groups.end());
  }

  VectorXd u = VectorXd::Zero(n);
  double h0 = 0.0;  // sum over event times <= t of d / S0
  double h1 = 0.0;  // sum over event times <= t of mean * d / S0
  for (const Group& g : groups) {
    if (g.d > 0.0) {
      h0 += g.d / g.s0;
      h1 += g.mean * g.d / g.s0;
    }
    for (Index q = g.start; q < g.end; ++q) {
      const Index i = order[static_cast<std::size_t>(q)];
      const double observed = sample.event(i) == 1 ? a(i) - g.mean : 0.0;
      u(i) = observed - risk(i) * (a(i) * h0 - h1);
    }
  }
  return u;
}

double sandwich_se(const SurvivalSample& sample, const CoxFit& fit) {
  if (!fit.converged) throw NotConverged("robust standard error requires a converged fit");
  validate(sample);
  SurvivalSample s = sample;
  s.weight = normalized(sample.weight);
  const VectorXd u = score_residuals(s, fit.theta);
  const double info = partial_likelihood(s, fit.theta).information;
  if (!(info > 0.0)) {
    throw NonIdentifiable("information is zero at the estimate; robust variance undefined");
  }
  const double meat = (s.weight.array() * u.array()).square().sum();
  return std::sqrt(meat) / info;
}

CoxModelFit fit_cox_model(const VectorXd& time, const VectorXi& event, const MatrixXd& design,
                          const VectorXd& weight) {
  validate_arrays(time, event, design.rows(), weight);
  if (design.cols() < 1) throw InvalidInput("design matrix has no columns");
  if (!design.allFinite()) throw InvalidInput("design matrix contains non-finite values");
  const VectorXd w = normalized(weight);

  if (design.cols() == 1) {
    check_single_covariate(time, event, design.col(0), w);
  } else {
    // Full column rank among positive-weight units after centering.
    std::vector<Index> keep;
    for (Index i = 0; i < w.size(); ++i) {
      if (w(i) > 0.0) keep.push_back(i);
    }
    MatrixXd sub(static_cast<Index>(keep.size()), design.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) sub.row(static_cast<Index>(r)) = design.row(keep[r]);
    sub.rowwise() -= sub.colwise().mean();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(sub);
    qr.setThreshold(1e-10);
    if (qr.rank() < design.cols()) {
      throw NonIdentifiable("design matrix is rank deficient among positive-weight units");
    }
  }

  const PartialLikelihoodEngine engine(time, event, design, w);
  const NewtonResult nr = newton(engine, design.cols());

  CoxModelFit fit;
  fit.coef = nr.beta;
  fit.information = nr.at.information;
  fit.loglik = nr.at.value;
  fit.iterations = nr.iterations;
  fit.converged = nr.converged;
  const MatrixXd scaled = nr.at.information * static_cast<double>(time.size());
  fit.se = scaled.inverse().diagonal().cwiseSqrt();
  return fit;
}

BootstrapCi bootstrap(Index n, int replicates, std::uint64_t seed, double theta_hat,
                      const std::function<std::optional<double>(const std::vector<Index>&)>& statistic,
                      int threads) {
  if (replicates < 2) throw InvalidInput("bootstrap needs at least two replicates");
  if (n < 1) throw InvalidInput("bootstrap needs a nonempty sample");

  std::vector<std::optional<double>> results(static_cast<std::size_t>(replicates));
  detail::parallel_for(results.size(), threads, [&](std::size_t r) {
    Rng rng = make_stream(seed, "bootstrap", r);
    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::vector<Index> idx(static_cast<std::size_t>(n));
    for (auto& i : idx) i = pick(rng);
    try {
      results[r] = statistic(idx);
    } catch (const Error&) {
      results[r] = std::nullopt;
    }
  });

  BootstrapCi ci;
  ci.theta = theta_hat;
  for (const auto& r : results) {
    if (r && std::isfinite(*r)) {
      ci.estimates.push_back(*r);
    } else {
      ++ci.replicates_failed;
    }
  }
  ci.replicates_used = static_cast<int>(ci.estimates.size());
  if (2 * ci.replicates_failed > replicates) {
    throw TooManyFailures(std::to_string(ci.replicates_failed) + " of " + std::to_string(replicates) +
                          " bootstrap replicates failed");
  }
  if (ci.replicates_used >= 2) {
    const double mean =
        std::accumulate(ci.estimates.begin(), ci.estimates.end(), 0.0) / ci.replicates_used;
    double ss = 0.0;
    for (double e : ci.estimates) ss += (e - mean) * (e - mean);
    ci.se_boot = std::sqrt(ss / (ci.replicates_used - 1));
  }
  ci.ci_low = theta_hat - kNormal975 * ci.se_boot;
  ci.ci_high = theta_hat + kNormal975 * ci.se_boot;
  ci.hr_low = std::exp(ci.ci_low);
  ci.hr_high = std::exp(ci.ci_high);
  return ci;
}

namespace {

std::optional<double> refit(const BootstrapData& data, const std::vector<Index>& idx, double delta,
                            BootstrapWeighting weighting, const qp::SolverSettings& settings) {
  const Index n = static_cast<Index>(idx.size());
  SurvivalSample s;
  s.time.resize(n);
  s.event.resize(n);
  s.treatment.resize(n);
  MatrixXd x(n, data.covariates.cols());
  for (Index r = 0; r < n; ++r) {
    const Index i = idx[static_cast<std::size_t>(r)];
    s.time(r) = data.time(i);
    s.event(r) = data.event(i);
    s.treatment(r) = data.treatment(i);
    x.row(r) = data.covariates.row(i);
  }
  if (weighting == BootstrapWeighting::Row) {
    const weights::RowResult row = weights::compute_row(x, s.treatment, delta, settings);
    if (!row.optimal()) return std::nullopt;
    s.weight = row.weights;
  } else {
    s.weight = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  }
  const CoxFit fit = fit_weighted_cox(s);
  if (!fit.converged) return std::nullopt;
  return fit.theta;
}

void check_bootstrap_data(const BootstrapData& data) {
  const Index n = data.time.size();
  if (data.event.size() != n || data.treatment.size() != n || data.covariates.rows() != n) {
    throw InvalidInput("bootstrap inputs have inconsistent lengths");
  }
}

}  // namespace

BootstrapCi bootstrap_ci(const BootstrapData& data, double delta, int replicates, std::uint64_t seed,
                         double theta_hat, BootstrapWeighting weighting,
                         const qp::SolverSettings& settings, int threads) {
  check_bootstrap_data(data);
  return bootstrap(
      data.time.size(), replicates, seed, theta_hat,
      [&](const std::vector<Index>& idx) { return refit(data, idx, delta, weighting, settings); },
      threads);
}

BootstrapCi bootstrap_ci(const BootstrapData& data, double delta, int replicates, std::uint64_t seed,
                         BootstrapWeighting weighting, const qp::SolverSettings& settings,
                         int threads) {
  check_bootstrap_data(data);
  std::vector<Index> all(static_cast<std::size_t>(data.time.size()));
  std::iota(all.begin(), all.end(), Index{0});
  const std::optional<double> theta = refit(data, all, delta, weighting, settings);
  if (!theta) {
    throw NotConverged("full-sample estimate failed (weights not optimal or Cox fit did not converge)");
  }
  return bootstrap_ci(data, delta, replicates, seed, *theta, weighting, settings, threads);
}

std::vector<KmCurve> weighted_km(const SurvivalSample& sample, const std::optional<VectorXi>& group) {
  // An all-censored sample is valid here: every curve stays at one.
  validate_arrays(sample.time, sample.event, sample.treatment.size(), sample.weight, false);
  const Index n = sample.size();
  if (group) {
    if (group->size() != n) throw InvalidInput("group labels have the wrong length");
    if (((group->array() != 0) && (group->array() != 1)).any()) {
      throw InvalidInput("group labels must be 0 or 1");
    }
  }
  // Scaling by the largest weight makes uniform weights exactly one, so the
  // estimator reproduces the count-based product limit bit for bit.
  const VectorXd w = sample.weight / sample.weight.maxCoeff();
  const std::vector<Index> order = time_order(sample.time);

  std::vector<int> labels;
  if (group) {
    for (int g : {0, 1}) {
      if ((group->array() == g).any()) labels.push_back(g);
    }
  } else {
    labels.push_back(0);
  }

  std::vector<KmCurve> curves;
  for (int label : labels) {
    KmCurve curve;
    curve.group = label;
    curve.points.push_back({0.0, 1.0});
    auto member = [&](Index i) { return !group || (*group)(i) == label; };

    double at_risk = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (member(i)) at_risk += w(i);
    }
    double surv = 1.0;
    Index pos = 0;
    while (pos < n) {
      const double t = sample.time(order[static_cast<std::size_t>(pos)]);
      Index end = pos;
      double deaths = 0.0;
      double leaving = 0.0;
      while (end < n && sample.time(order[static_cast<std::size_t>(end)]) == t) {
        const Index i = order[static_cast<std::size_t>(end)];
        if (member(i)) {
          leaving += w(i);
          if (sample.event(i) == 1) deaths += w(i);
        }
        ++end;
      }
      if (deaths > 0.0 && at_risk > 0.0) {
        surv *= 1.0 - deaths / at_risk;
        curve.points.push_back({t, surv});
      }
      at_risk -= leaving;
      pos = end;
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

}  // namespace rowsurv::surv
