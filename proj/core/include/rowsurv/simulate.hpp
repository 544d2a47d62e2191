#pragma once

#include "rowsurv/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <utility>

namespace rowsurv::sim {

enum class TreatmentKind { Binary, Continuous };

/// SixCovariate: the six-covariate population. Gaussian: K iid N(0, 1) confounders
/// sharing one outcome coefficient and one treatment coefficient, used by the
/// sample-size and confounder-count sweeps.
enum class Generator { SixCovariate, Gaussian };

struct ScenarioConfig {
  Eigen::Index n = 1000;
  double theta = 0.2;
  double psi = 0.01;
  double shape = 1.0;
  Eigen::VectorXd beta = (Eigen::VectorXd(6) << 0.0, 1.0, 0.0, 1.4, 1.4, 1.0).finished();
  TreatmentKind treatment = TreatmentKind::Binary;
  double gamma = 1.0;  ///< logit slope of the binary treatment model
  double eta = 0.6;    ///< log-sd of the continuous treatment noise
  double tau = 0.0;    ///< misspecification mix, 0 = correct covariates
  double epsilon = 0.01;  ///< exponential censoring rate, 0 = no censoring
  std::uint64_t seed = 1;

  Generator generator = Generator::SixCovariate;
  int num_confounders = 4;
  double confounder_beta = 1.4;
  double confounder_gamma = 1.5;
};

/// Throws InvalidInput when a knob is out of range.
void validate(const ScenarioConfig& config);

struct GeneratedData {
  Eigen::MatrixXd x_true;
  Eigen::MatrixXd x_observed;
  Eigen::VectorXd a;
  Eigen::VectorXd t_event;
  Eigen::VectorXd c;  ///< +inf when there is no censoring
  Eigen::VectorXd y;
  Eigen::VectorXi delta;
};

/// X1, X2 ~ N(0.1, 1), X3 ~ logN(0, 0.5), X4 ~ 5 Beta(3, 1), X5 in {1,2,3,4}
/// with probabilities (0.35, 0.25, 0.05, 0.35), X6 ~ Bernoulli(0.25).
Eigen::MatrixXd gen_covariates(Eigen::Index n, Rng& rng);

/// n x k matrix of iid standard normals.
Eigen::MatrixXd gen_gaussian_covariates(Eigen::Index n, int k, Rng& rng);

/// Centered linear predictor s_i - mean(s), where s_i = sum_k coef * x_ik.
Eigen::VectorXd centered_score(const Eigen::MatrixXd& x, double coef = 1.0);

/// pi_i = logistic(gamma * (x_i' e - mean)).
Eigen::VectorXd propensity_binary(const Eigen::MatrixXd& x, double gamma);

Eigen::VectorXd gen_treatment_binary(const Eigen::MatrixXd& x, double gamma, Rng& rng);

/// A_i = x_i' e - mean + logN(0, eta^2); eta = 0 gives the constant noise 1.
Eigen::VectorXd gen_treatment_continuous(const Eigen::MatrixXd& x, double eta, Rng& rng);

enum class MisspecKind { BinaryScenario, ContinuousScenario };

/// Columns 1-4 become (1 - tau) X + tau Z; the remaining columns are copied.
Eigen::MatrixXd apply_misspecification(const Eigen::MatrixXd& x, double tau, MisspecKind kind);

/// Weibull times by inversion: T = (-log u / (psi exp(theta A + x' beta)))^(1/shape).
Eigen::VectorXd gen_event_times(const Eigen::VectorXd& a, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& beta, double theta, double psi, double shape,
                                Rng& rng);

/// Exponential censoring times with the given rate; +inf everywhere when rate = 0.
Eigen::VectorXd gen_censoring(Eigen::Index n, double rate, Rng& rng);

/// One replicate. Each stage draws from its own substream of (config.seed, replicate).
GeneratedData generate(const ScenarioConfig& config, std::uint64_t replicate);

/// Covariate-treatment relationship gallery, kinds 1-8:
/// linear, quadratic, cubic, lattice (uncorrelated), sinusoidal, independent,
/// right-skewed, left-skewed. Returns (x, a).
std::pair<Eigen::VectorXd, Eigen::VectorXd> relationship_gallery(int kind, Eigen::Index n, Rng& rng);

}  // namespace rowsurv::sim
