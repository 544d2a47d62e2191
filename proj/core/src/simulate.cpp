#include "rowsurv/simulate.hpp"

#include "rowsurv/errors.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace rowsurv::sim {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double logistic(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// Uniform on the open interval (0, 1).
double open_uniform(Rng& rng) {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(rng);
    if (u > 0.0) return u;
  }
}

}  // namespace

void validate(const ScenarioConfig& c) {
  if (c.n < 2) throw InvalidInput("n must be at least 2");
  if (!(c.psi > 0.0)) throw InvalidInput("psi must be positive");
  if (!(c.shape > 0.0)) throw InvalidInput("Weibull shape must be positive");
  if (!(c.tau >= 0.0 && c.tau <= 1.0)) throw InvalidInput("tau must lie in [0, 1]");
  if (!(c.epsilon >= 0.0) || !std::isfinite(c.epsilon)) {
    throw InvalidInput("censoring rate must be finite and nonnegative");
  }
  if (!(c.eta >= 0.0)) throw InvalidInput("eta must be nonnegative");
  if (!(c.gamma >= 0.0)) throw InvalidInput("gamma must be nonnegative");
  if (c.generator == Generator::SixCovariate && c.beta.size() != 6) {
    throw InvalidInput("beta must have six entries");
  }
  if (c.generator == Generator::Gaussian && c.num_confounders < 1) {
    throw InvalidInput("at least one confounder is required");
  }
}

MatrixXd gen_covariates(Index n, Rng& rng) {
  MatrixXd x(n, 6);
  std::normal_distribution<double> n01(0.1, 1.0);
  std::lognormal_distribution<double> ln(0.0, 0.5);
  std::discrete_distribution<int> cat({0.35, 0.25, 0.05, 0.35});
  std::bernoulli_distribution bern(0.25);
  for (Index i = 0; i < n; ++i) x(i, 0) = n01(rng);
  for (Index i = 0; i < n; ++i) x(i, 1) = n01(rng);
  for (Index i = 0; i < n; ++i) x(i, 2) = ln(rng);
  for (Index i = 0; i < n; ++i) x(i, 3) = 5.0 * draw_beta(rng, 3.0, 1.0);
  for (Index i = 0; i < n; ++i) x(i, 4) = static_cast<double>(cat(rng) + 1);
  for (Index i = 0; i < n; ++i) x(i, 5) = bern(rng) ? 1.0 : 0.0;
  return x;
}

MatrixXd gen_gaussian_covariates(Index n, int k, Rng& rng) {
  MatrixXd x(n, k);
  std::normal_distribution<double> z(0.0, 1.0);
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < n; ++i) x(i, j) = z(rng);
  }
  return x;
}

VectorXd centered_score(const MatrixXd& x, double coef) {
  VectorXd s = coef * x.rowwise().sum();
  s.array() -= s.mean();
  return s;
}

VectorXd propensity_binary(const MatrixXd& x, double gamma) {
  const VectorXd s = centered_score(x);
  return s.unaryExpr([gamma](double v) { return logistic(gamma * v); });
}

VectorXd gen_treatment_binary(const MatrixXd& x, double gamma, Rng& rng) {
  const VectorXd pi = propensity_binary(x, gamma);
  VectorXd a(pi.size());
  for (Index i = 0; i < pi.size(); ++i) a(i) = open_uniform(rng) < pi(i) ? 1.0 : 0.0;
  return a;
}

VectorXd gen_treatment_continuous(const MatrixXd& x, double eta, Rng& rng) {
  VectorXd a = centered_score(x);
  std::normal_distribution<double> z(0.0, 1.0);
  for (Index i = 0; i < a.size(); ++i) a(i) += std::exp(eta * z(rng));
  return a;
}

MatrixXd apply_misspecification(const MatrixXd& x, double tau, MisspecKind kind) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidInput("tau must lie in [0, 1]");
  if (x.cols() < 4) throw InvalidInput("misspecification needs at least four covariates");
  MatrixXd out = x;
  if (tau == 0.0) return out;
  for (Index i = 0; i < x.rows(); ++i) {
    const double x1 = x(i, 0), x2 = x(i, 1), x3 = x(i, 2), x4 = x(i, 3);
    double z[4];
    if (kind == MisspecKind::BinaryScenario) {
      z[0] = (x1 + 0.5) * (x1 + 0.5);
      z[1] = std::pow(x1 * x2 / 5.0 + 1.0, 2);
      z[2] = std::exp(x3 / 2.0);
      z[3] = x4 * (1.0 + std::exp(x3)) + 1.0;
    } else {
      z[0] = std::exp(x1 / 2.0);
      z[1] = x2 * (1.0 + std::exp(x1)) + 1.0;
      z[2] = std::pow(x1 * x3 / 25.0 + 0.2, 3);
      z[3] = 2.0 * std::log(std::abs(x4));
    }
    for (int k = 0; k < 4; ++k) out(i, k) = (1.0 - tau) * x(i, k) + tau * z[k];
  }
  return out;
}

VectorXd gen_event_times(const VectorXd& a, const MatrixXd& x, const VectorXd& beta, double theta,
                         double psi, double shape, Rng& rng) {
  if (x.cols() != beta.size()) throw InvalidInput("beta length does not match the covariates");
  const VectorXd lp = theta * a + x * beta;
  VectorXd t(a.size());
  for (Index i = 0; i < a.size(); ++i) {
    const double u = open_uniform(rng);
    t(i) = std::pow(-std::log(u) / (psi * std::exp(lp(i))), 1.0 / shape);
  }
  return t;
}

VectorXd gen_censoring(Index n, double rate, Rng& rng) {
  if (!(rate >= 0.0)) throw InvalidInput("censoring rate must be nonnegative");
  if (rate == 0.0) return VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  std::exponential_distribution<double> e(rate);
  VectorXd c(n);
  for (Index i = 0; i < n; ++i) c(i) = e(rng);
  return c;
}

GeneratedData generate(const ScenarioConfig& config, std::uint64_t replicate) {
  validate(config);
  Rng cov_rng = make_stream(config.seed, "covariates", replicate);
  Rng trt_rng = make_stream(config.seed, "treatment", replicate);
  Rng evt_rng = make_stream(config.seed, "events", replicate);
  Rng cen_rng = make_stream(config.seed, "censoring", replicate);

  GeneratedData d;
  VectorXd beta;
  if (config.generator == Generator::SixCovariate) {
    d.x_true = gen_covariates(config.n, cov_rng);
    beta = config.beta;
    d.a = config.treatment == TreatmentKind::Binary ? gen_treatment_binary(d.x_true, config.gamma, trt_rng)
                                                    : gen_treatment_continuous(d.x_true, config.eta, trt_rng);
    d.x_observed = apply_misspecification(
        d.x_true, config.tau,
        config.treatment == TreatmentKind::Binary ? MisspecKind::BinaryScenario
                                                  : MisspecKind::ContinuousScenario);
  } else {
    d.x_true = gen_gaussian_covariates(config.n, config.num_confounders, cov_rng);
    beta = VectorXd::Constant(config.num_confounders, config.confounder_beta);
    const VectorXd s = centered_score(d.x_true, config.confounder_gamma);
    d.a.resize(config.n);
    if (config.treatment == TreatmentKind::Binary) {
      for (Index i = 0; i < config.n; ++i) {
        d.a(i) = open_uniform(trt_rng) < logistic(config.gamma * s(i)) ? 1.0 : 0.0;
      }
    } else {
      std::normal_distribution<double> z(0.0, 1.0);
      for (Index i = 0; i < config.n; ++i) d.a(i) = s(i) + std::exp(config.eta * z(trt_rng));
    }
    d.x_observed = d.x_true;
  }

  d.t_event = gen_event_times(d.a, d.x_true, beta, config.theta, config.psi, config.shape, evt_rng);
  d.c = gen_censoring(config.n, config.epsilon, cen_rng);
  d.y.resize(config.n);
  d.delta.resize(config.n);
  for (Index i = 0; i < config.n; ++i) {
    const bool observed = d.t_event(i) < d.c(i);
    d.y(i) = observed ? d.t_event(i) : d.c(i);
    d.delta(i) = observed ? 1 : 0;
  }
  return d;
}

std::pair<VectorXd, VectorXd> relationship_gallery(int kind, Index n, Rng& rng) {
  if (n < 2) throw InvalidInput("gallery needs at least two units");
  if (kind < 1 || kind > 8) throw InvalidInput("gallery kind must be between 1 and 8");
  // Second normal parameter is a variance.
  auto normal = [&rng](double mean, double var) {
    return std::normal_distribution<double>(mean, std::sqrt(var))(rng);
  };
  VectorXd x(n), a(n);
  for (Index i = 0; i < n; ++i) {
    switch (kind) {
      case 1:
        x(i) = normal(0, 1);
        a(i) = x(i) + normal(0, 1);
        break;
      case 2:
        x(i) = normal(0, 1);
        a(i) = x(i) + x(i) * x(i) + normal(0, 1);
        break;
      case 3:
        x(i) = normal(0, 1);
        a(i) = 0.5 * std::pow(x(i) + 0.1, 3) + normal(0, 1);
        break;
      case 4: {
        x(i) = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
        if (std::abs(x(i)) <= 1.0 / 6.0) {
          a(i) = normal(0, 1.0 / 3.0);
        } else {
          const bool upper = std::bernoulli_distribution(0.5)(rng);
          a(i) = normal(upper ? 1.0 : -1.0, 1.0 / 3.0);
        }
        break;
      }
      case 5:
        x(i) = normal(0, 4);
        a(i) = std::sin(x(i)) + normal(0, 0.1);
        break;
      case 6:
        x(i) = normal(0, 1);
        a(i) = normal(0, 1);
        break;
      case 7:
        x(i) = draw_beta(rng, 1.0, 5.0);
        a(i) = 4.0 * x(i) + std::lognormal_distribution<double>(0.0, 0.7)(rng);
        break;
      case 8:
        x(i) = draw_beta(rng, 5.0, 1.0);
        a(i) = 4.0 * x(i) + draw_beta(rng, 5.0, 1.0);
        break;
    }
  }
  return {x, a};
}

}  // namespace rowsurv::sim
