#include "oracles.hpp"

#include <rowsurv/errors.hpp>
#include <rowsurv/survival.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;
namespace surv = rowsurv::surv;

struct Fixture {
  surv::SurvivalSample sample;
  std::uint64_t seed = 0;
};

// Small datasets with mixed events and nonuniform weights; odd seeds get tied times.
Fixture make_fixture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(4, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = size(rng);
  Fixture f;
  f.seed = seed;
  auto& s = f.sample;
  s.time.resize(n);
  s.event.resize(n);
  s.treatment.resize(n);
  s.weight.resize(n);
  for (int i = 0; i < n; ++i) {
    s.time(i) = 0.1 + 5.0 * u(rng);
    if (seed % 2 == 1) s.time(i) = std::ceil(s.time(i));
    s.event(i) = u(rng) < 0.7 ? 1 : 0;
    s.treatment(i) = seed % 3 == 0 ? (u(rng) < 0.5 ? 1.0 : 0.0) : 2.0 * u(rng) - 1.0;
    s.weight(i) = 0.2 + u(rng);
  }
  s.event(0) = 1;
  s.treatment(0) = 1.0;
  s.treatment(1) = 0.0;
  return f;
}

// First fixture at or after `seed` whose likelihood has an interior maximizer.
surv::SurvivalSample finite_fixture(std::uint64_t seed) {
  for (;; ++seed) {
    Fixture f = make_fixture(seed);
    const auto& s = f.sample;
    if (std::abs(oracle::cox_grid_argmax(s.time, s.event, s.treatment, s.weight, -10, 10, 1e-3)) < 9.0) return s;
  }
}

TEST(Cox, ConstantTreatmentIsNonIdentifiable) {
  VectorXd t(4);
  t << 1, 2, 3, 4;
  VectorXi e = VectorXi::Ones(4);
  EXPECT_THROW(surv::fit_weighted_cox(surv::uniform_sample(t, e, VectorXd::Constant(4, 1.0))),
               rowsurv::NonIdentifiable);
}

TEST(Cox, TwoPointSeparationIsMonotone) {
  VectorXd t(2);
  t << 1, 2;
  VectorXd a(2);
  a << 1, 0;
  EXPECT_THROW(surv::fit_weighted_cox(surv::uniform_sample(t, VectorXi::Ones(2), a)), rowsurv::MonotoneLikelihood);
}

TEST(Cox, NoEvents) {
  VectorXd t(3);
  t << 1, 2, 3;
  VectorXd a(3);
  a << 1, 0, 1;
  EXPECT_THROW(surv::fit_weighted_cox(surv::uniform_sample(t, VectorXi::Zero(3), a)), rowsurv::NoEvents);
}

TEST(Cox, RejectsBadInput) {
  VectorXd t(3);
  t << 1, -2, 3;
  VectorXd a(3);
  a << 1, 0, 1;
  EXPECT_THROW(surv::fit_weighted_cox(surv::uniform_sample(t, VectorXi::Ones(3), a)), rowsurv::InvalidInput);
  t(1) = 2;
  auto s = surv::uniform_sample(t, VectorXi::Ones(3), a);
  s.weight(0) = -1.0;
  EXPECT_THROW(surv::fit_weighted_cox(s), rowsurv::InvalidInput);
  s = surv::uniform_sample(t, VectorXi::Ones(3), a);
  s.event(2) = 2;
  EXPECT_THROW(surv::fit_weighted_cox(s), rowsurv::InvalidInput);
}

TEST(Cox, PointMassWeightIsNonIdentifiable) {
  VectorXd t(4);
  t << 1, 2, 3, 4;
  VectorXd a(4);
  a << 1, 0, 1, 0;
  auto s = surv::uniform_sample(t, VectorXi::Ones(4), a);
  s.weight.setZero();
  s.weight(0) = 1.0;
  EXPECT_THROW(surv::fit_weighted_cox(s), rowsurv::NonIdentifiable);
}

TEST(Cox, MatchesGridOracle) {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 20 && seed < 200; ++seed) {
    const Fixture f = make_fixture(seed);
    const auto& s = f.sample;
    const double ref = oracle::cox_grid_argmax(s.time, s.event, s.treatment, s.weight);
    if (std::abs(ref) > 9.0) continue;  // maximizer at the edge: likelihood is monotone
    const auto fit = surv::fit_weighted_cox(s);
    ASSERT_TRUE(fit.converged) << "seed " << seed;
    EXPECT_NEAR(fit.theta, ref, 1e-4) << "seed " << seed;
    EXPECT_LE(std::abs(surv::partial_likelihood(s, fit.theta).score), 1e-8);
    EXPECT_DOUBLE_EQ(fit.hazard_ratio, std::exp(fit.theta));
    EXPECT_GT(fit.se_naive, 0.0);
    EXPECT_GT(fit.se_robust, 0.0);
    ++checked;
  }
  EXPECT_EQ(checked, 20);
}

TEST(Cox, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto& s = make_fixture(seed).sample;
    const MatrixXd x = s.treatment;
    auto ll = [&](double th) { return oracle::cox_loglik(s.time, s.event, x, s.weight, VectorXd::Constant(1, th)); };
    for (int k = 0; k < 10; ++k) {
      const double th = u(rng);
      const auto pl = surv::partial_likelihood(s, th);
      EXPECT_NEAR(pl.value, ll(th), 1e-12 * (1.0 + std::abs(ll(th))));
      const double h = 1e-4;
      const double d1 = (ll(th + h) - ll(th - h)) / (2 * h);
      const double d2 = (ll(th + h) - 2 * ll(th) + ll(th - h)) / (h * h);
      EXPECT_NEAR(pl.score, d1, 1e-6 * std::max(1.0, std::abs(d1)));
      EXPECT_NEAR(pl.information, -d2, 1e-6 * std::max(1.0, std::abs(d2)));
    }
  }
}

TEST(Cox, LabelFlipNegatesEstimate) {
  for (std::uint64_t seed : {2u, 4u, 5u, 8u}) {
    auto s = make_fixture(seed).sample;
    const double ref = oracle::cox_grid_argmax(s.time, s.event, s.treatment, s.weight, -10, 10, 1e-3);
    if (std::abs(ref) > 9.0) continue;
    const auto fit = surv::fit_weighted_cox(s);
    s.treatment = -s.treatment;
    const auto flipped = surv::fit_weighted_cox(s);
    EXPECT_EQ(flipped.theta, -fit.theta);
    EXPECT_EQ(flipped.se_naive, fit.se_naive);
  }
}

TEST(Cox, WeightScaleInvariance) {
  const auto s = finite_fixture(4);
  auto scaled = s;
  scaled.weight *= 7.25;
  const auto a = surv::fit_weighted_cox(s);
  const auto b = surv::fit_weighted_cox(scaled);
  EXPECT_NEAR(a.theta, b.theta, 1e-13);
  EXPECT_NEAR(a.se_robust, b.se_robust, 1e-13);
  EXPECT_NEAR(a.se_naive, b.se_naive, 1e-13);
}

TEST(Cox, RobustAndNaiveAgreeUnderNull) {
  // No confounding, theta 0, uniform weights: the model is correct, so the
  // sandwich and the information-based SE estimate the same quantity.
  std::mt19937_64 rng(5150);
  std::exponential_distribution<double> expo(1.0);
  std::bernoulli_distribution coin(0.5);
  double ratio_sum = 0.0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const int n = 200;
    VectorXd t(n), a(n);
    for (int i = 0; i < n; ++i) {
      t(i) = expo(rng);
      a(i) = coin(rng) ? 1.0 : 0.0;
    }
    const auto fit = surv::fit_weighted_cox(surv::uniform_sample(t, VectorXi::Ones(n), a));
    ratio_sum += fit.se_robust / fit.se_naive;
  }
  const double mean_ratio = ratio_sum / reps;
  EXPECT_GE(mean_ratio, 0.8);
  EXPECT_LE(mean_ratio, 1.2);
}

TEST(Cox, SandwichNeedsConvergedFit) {
  const auto s = finite_fixture(4);
  surv::CoxFit fit;
  fit.converged = false;
  EXPECT_THROW(surv::sandwich_se(s, fit), rowsurv::NotConverged);
}

TEST(Cox, ScoreResidualsSumToScore) {
  const auto s = finite_fixture(6);
  auto norm = s;
  norm.weight /= s.weight.sum();
  for (double th : {-0.7, 0.0, 0.4}) {
    const VectorXd u = surv::score_residuals(norm, th);
    const double total = (norm.weight.array() * u.array()).sum();
    EXPECT_NEAR(total, surv::partial_likelihood(norm, th).score, 1e-12);
  }
}

TEST(CoxModel, MatchesCoordinateOracle) {
  int checked = 0;
  for (std::uint64_t seed = 1; seed < 100 && checked < 3; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 6;
    VectorXd t(n), w(n);
    VectorXi e(n);
    MatrixXd x(n, 2);
    for (int i = 0; i < n; ++i) {
      t(i) = 0.1 + u(rng);
      e(i) = u(rng) < 0.8 ? 1 : 0;
      x(i, 0) = u(rng) < 0.5 ? 1.0 : 0.0;
      x(i, 1) = 2.0 * u(rng) - 1.0;
      w(i) = 1.0;
    }
    surv::CoxModelFit fit;
    try {
      fit = surv::fit_cox_model(t, e, x, w);
    } catch (const rowsurv::CoxError&) {
      continue;
    }
    if (!fit.converged || fit.coef.cwiseAbs().maxCoeff() > 3.0) continue;
    const VectorXd ref = oracle::cox_coordinate_search(t, e, x, w);
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(fit.coef(k), ref(k), 1e-3) << "seed " << seed;
    ++checked;
  }
  EXPECT_EQ(checked, 3);
}

TEST(CoxModel, SingleColumnEqualsWeightedCox) {
  const auto s = finite_fixture(4);
  const auto one = surv::fit_weighted_cox(s);
  const auto many = surv::fit_cox_model(s.time, s.event, s.treatment, s.weight);
  EXPECT_NEAR(many.coef(0), one.theta, 1e-12);
  EXPECT_NEAR(many.se(0), one.se_naive, 1e-12);
}

TEST(CoxModel, RankDeficientDesign) {
  const auto s = finite_fixture(4);
  MatrixXd x(s.size(), 2);
  x.col(0) = s.treatment;
  x.col(1) = 2.0 * s.treatment;
  EXPECT_THROW(surv::fit_cox_model(s.time, s.event, x, s.weight), rowsurv::NonIdentifiable);
}

// --- bootstrap -------------------------------------------------------------

surv::BootstrapData simulated(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::exponential_distribution<double> expo(1.0);
  surv::BootstrapData d;
  d.time.resize(n);
  d.event.resize(n);
  d.treatment.resize(n);
  d.covariates.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    d.covariates(i, 0) = normal(rng);
    d.covariates(i, 1) = normal(rng);
    d.treatment(i) = normal(rng) + 0.5 * d.covariates(i, 0);
    d.time(i) = expo(rng) / std::exp(0.3 * d.treatment(i) + 0.5 * d.covariates(i, 0));
    d.event(i) = expo(rng) > 0.3 * d.time(i) ? 1 : 0;
  }
  return d;
}

TEST(Bootstrap, TwoReplicatesDeterministic) {
  const auto d = simulated(120, 3);
  const auto a = surv::bootstrap_ci(d, 0.001, 2, 7);
  const auto b = surv::bootstrap_ci(d, 0.001, 2, 7);
  ASSERT_EQ(a.estimates.size(), 2u);
  EXPECT_EQ(a.estimates, b.estimates);
  EXPECT_EQ(a.se_boot, b.se_boot);
  EXPECT_NEAR(a.se_boot, std::abs(a.estimates[0] - a.estimates[1]) / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(a.replicates_used + a.replicates_failed, 2);
  EXPECT_LT(a.ci_low, a.ci_high);
  EXPECT_NEAR(a.ci_high - a.theta, rowsurv::surv::kNormal975 * a.se_boot, 1e-14);
  EXPECT_NEAR(a.hr_low, std::exp(a.ci_low), 1e-14);
  const auto c = surv::bootstrap_ci(d, 0.001, 2, 8);
  EXPECT_NE(a.estimates, c.estimates);
}

TEST(Bootstrap, ThreadIndependent) {
  const auto d = simulated(100, 4);
  const auto a = surv::bootstrap_ci(d, 0.001, 6, 11, surv::BootstrapWeighting::Row, {}, 1);
  const auto b = surv::bootstrap_ci(d, 0.001, 6, 11, surv::BootstrapWeighting::Row, {}, 3);
  EXPECT_EQ(a.estimates, b.estimates);
}

TEST(Bootstrap, ConstantStatisticGivesZeroSe) {
  const auto r = surv::bootstrap(50, 10, 1, 0.5, [](const std::vector<Eigen::Index>&) { return 0.5; });
  EXPECT_EQ(r.se_boot, 0.0);
  EXPECT_EQ(r.replicates_used, 10);
}

TEST(Bootstrap, ResamplesWithReplacement) {
  std::vector<std::vector<Eigen::Index>> seen;
  surv::bootstrap(20, 5, 3, 0.0, [&](const std::vector<Eigen::Index>& idx) {
    seen.push_back(idx);
    return 0.0;
  });
  ASSERT_EQ(seen.size(), 5u);
  bool repeated = false;
  for (const auto& idx : seen) {
    EXPECT_EQ(idx.size(), 20u);
    std::vector<Eigen::Index> sorted = idx;
    std::sort(sorted.begin(), sorted.end());
    repeated |= std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
    for (auto i : idx) EXPECT_LT(i, 20);
  }
  EXPECT_TRUE(repeated);
}

TEST(Bootstrap, FailuresCountedThenFatal) {
  int calls = 0;
  const auto ok = surv::bootstrap(10, 4, 1, 0.0, [&](const std::vector<Eigen::Index>&) -> std::optional<double> {
    return ++calls % 2 == 0 ? std::optional<double>() : std::optional<double>(calls);
  });
  EXPECT_EQ(ok.replicates_failed, 2);
  EXPECT_EQ(ok.replicates_used, 2);
  EXPECT_THROW(surv::bootstrap(10, 4, 1, 0.0,
                               [](const std::vector<Eigen::Index>& idx) -> std::optional<double> {
                                 if (idx[0] % 7 == 0) return 1.0;
                                 return std::nullopt;
                               }),
               rowsurv::TooManyFailures);
}

// --- Kaplan-Meier ----------------------------------------------------------

TEST(Km, UniformNoCensoring) {
  VectorXd t(4);
  t << 3, 1, 4, 2;
  VectorXd a = VectorXd::Zero(4);
  const auto curves = surv::weighted_km(surv::uniform_sample(t, VectorXi::Ones(4), a));
  ASSERT_EQ(curves.size(), 1u);
  const auto& p = curves[0].points;
  ASSERT_EQ(p.size(), 5u);
  for (int k = 0; k <= 4; ++k) {
    EXPECT_DOUBLE_EQ(p[static_cast<std::size_t>(k)].time, k);
    EXPECT_NEAR(p[static_cast<std::size_t>(k)].survival, 1.0 - k / 4.0, 1e-15);
  }
}

TEST(Km, AllCensored) {
  VectorXd t(3);
  t << 1, 2, 3;
  auto s = surv::uniform_sample(t, VectorXi::Ones(3), VectorXd::Zero(3));
  s.event.setZero();
  const auto curves = surv::weighted_km(s);
  ASSERT_EQ(curves.size(), 1u);
  for (const auto& p : curves[0].points) EXPECT_EQ(p.survival, 1.0);
}

TEST(Km, WeightedHandComputed) {
  VectorXd t(5);
  t << 1, 2, 3, 4, 5;
  VectorXi e(5);
  e << 1, 0, 1, 1, 0;
  auto s = surv::uniform_sample(t, e, VectorXd::Zero(5));
  s.weight << 0.1, 0.3, 0.2, 0.25, 0.15;
  const auto p = surv::weighted_km(s)[0].points;
  ASSERT_EQ(p.size(), 4u);
  // 1 - 0.1/1 = 0.9; then 0.9 * (1 - 0.2/0.6) = 0.6; then 0.6 * (1 - 0.25/0.4) = 0.225.
  EXPECT_NEAR(p[1].survival, 0.9, 1e-15);
  EXPECT_NEAR(p[2].survival, 0.6, 1e-15);
  EXPECT_NEAR(p[3].survival, 0.225, 1e-15);
  EXPECT_EQ(p[3].time, 4.0);
}

TEST(Km, UniformMatchesClassicBitwise) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto& f = make_fixture(seed).sample;
    const auto ref = oracle::classic_km(f.time, f.event);
    const auto got = surv::weighted_km(surv::uniform_sample(f.time, f.event, f.treatment))[0].points;
    ASSERT_EQ(got.size(), ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) {
      EXPECT_EQ(got[k].time, ref[k].first);
      EXPECT_EQ(got[k].survival, ref[k].second);
    }
  }
}

TEST(Km, GroupsSplitCurves) {
  VectorXd t(6);
  t << 1, 2, 3, 4, 5, 6;
  VectorXi g(6);
  g << 0, 1, 0, 1, 0, 1;
  const auto curves = surv::weighted_km(surv::uniform_sample(t, VectorXi::Ones(6), VectorXd::Zero(6)), g);
  ASSERT_EQ(curves.size(), 2u);
  EXPECT_EQ(curves[0].group, 0);
  EXPECT_EQ(curves[1].group, 1);
  EXPECT_EQ(curves[1].points[1].time, 2.0);
  EXPECT_NEAR(curves[1].points[1].survival, 2.0 / 3.0, 1e-15);
}

}  // namespace
