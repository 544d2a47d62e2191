#include "oracles.hpp"

#include <rowsurv/balance.hpp>
#include <rowsurv/errors.hpp>
#include <rowsurv/row_weights.hpp>

#include <gtest/gtest.h>

#include <random>

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace bal = rowsurv::balance;

TEST(Balance, IdenticalGroupsHaveZeroAsmd) {
  MatrixXd x(6, 2);
  x << 1, 0, 2, 1, 3, 0, 1, 0, 2, 1, 3, 0;
  VectorXd a(6);
  a << 0, 0, 0, 1, 1, 1;
  const auto r = bal::asmd(x, a, VectorXd::Constant(6, 1.0 / 6));
  EXPECT_EQ(r.metric, bal::Metric::Asmd);
  EXPECT_FALSE(r.weighted);
  EXPECT_NEAR(r.per_covariate.cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Balance, ShiftedGroupHasUnitAsmd) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  const int n = 200000;
  MatrixXd x(n, 1);
  VectorXd a(n);
  for (int i = 0; i < n; ++i) {
    a(i) = i % 2;
    x(i, 0) = normal(rng) + a(i);
  }
  const auto r = bal::asmd(x, a, VectorXd::Constant(n, 1.0 / n));
  EXPECT_NEAR(r.per_covariate(0), 1.0, 0.02);
}

TEST(Balance, HandComputedAsmd) {
  MatrixXd x(4, 1);
  x << 1, 3, 2, 6;
  VectorXd a(4);
  a << 0, 0, 1, 1;
  // group variances (n-1): 2 and 8, pooled sd sqrt(5); means 2 and 4.
  const auto r = bal::asmd(x, a, VectorXd::Constant(4, 0.25));
  EXPECT_NEAR(r.per_covariate(0), 2.0 / std::sqrt(5.0), 1e-15);
  VectorXd w(4);
  w << 0.1, 0.4, 0.3, 0.2;
  // weighted means: (0.1 + 1.2) / 0.5 = 2.6 and (0.6 + 1.2) / 0.5 = 3.6.
  const auto rw = bal::asmd(x, a, w);
  EXPECT_TRUE(rw.weighted);
  EXPECT_NEAR(rw.per_covariate(0), 1.0 / std::sqrt(5.0), 1e-15);
}

TEST(Balance, BinaryCovariateUsesRawDifference) {
  MatrixXd x(6, 1);
  x << 0, 0, 1, 1, 1, 0;
  VectorXd a(6);
  a << 0, 0, 0, 1, 1, 1;
  const auto r = bal::asmd(x, a, VectorXd::Constant(6, 1.0 / 6));
  EXPECT_NEAR(r.per_covariate(0), 1.0 / 3.0, 1e-15);
}

TEST(Balance, AsmdAffineInvariant) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  MatrixXd x(50, 2);
  VectorXd a(50), w(50);
  for (int i = 0; i < 50; ++i) {
    x(i, 0) = normal(rng);
    x(i, 1) = normal(rng);
    a(i) = i % 3 == 0;
    w(i) = 1.0 + std::abs(normal(rng));
  }
  w /= w.sum();
  MatrixXd y = x;
  y.col(0) = 4.0 * y.col(0).array() + 9.0;
  y.col(1) = -0.5 * y.col(1).array() - 1.0;
  const auto r1 = bal::asmd(x, a, w);
  const auto r2 = bal::asmd(y, a, w);
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(r1.per_covariate(k), r2.per_covariate(k), 1e-12);
}

TEST(Balance, EmptyGroup) {
  MatrixXd x(3, 1);
  x << 1, 2, 3;
  EXPECT_THROW(bal::asmd(x, VectorXd::Ones(3), VectorXd::Constant(3, 1.0 / 3)), rowsurv::EmptyGroup);
}

TEST(Balance, AbsCorrIsPearson) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  MatrixXd x(80, 3);
  VectorXd a(80);
  for (int i = 0; i < 80; ++i) {
    for (int k = 0; k < 3; ++k) x(i, k) = normal(rng);
    a(i) = x(i, 0) - x(i, 2) + normal(rng);
  }
  const auto r = bal::abs_corr(x, a, VectorXd::Constant(80, 1.0 / 80));
  EXPECT_EQ(r.metric, bal::Metric::AbsCorrelation);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(r.per_covariate(k), std::abs(oracle::pearson(x.col(k), a)), 1e-12);
}

TEST(Balance, AbsCorrSelfIsOne) {
  MatrixXd x(5, 1);
  x << 1, 4, 2, 8, 5;
  EXPECT_NEAR(bal::abs_corr(x, x.col(0), VectorXd::Constant(5, 0.2)).per_covariate(0), 1.0, 1e-15);
}

TEST(Balance, AbsCorrIndependentIsSmall) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  const int n = 20000;
  MatrixXd x(n, 2);
  VectorXd a(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = normal(rng);
    x(i, 1) = normal(rng);
    a(i) = normal(rng);
  }
  const auto r = bal::abs_corr(x, a, VectorXd::Constant(n, 1.0 / n));
  EXPECT_LT(r.summary.max, 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Balance, AbsCorrConstantColumn) {
  MatrixXd x(4, 1);
  x << 2, 2, 2, 2;
  EXPECT_THROW(bal::abs_corr(x, VectorXd::LinSpaced(4, 0, 1), VectorXd::Constant(4, 0.25)), rowsurv::ConstantColumn);
}

TEST(Balance, PostRowWithinDelta) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  MatrixXd x(300, 4);
  VectorXd a(300);
  for (int i = 0; i < 300; ++i) {
    for (int k = 0; k < 4; ++k) x(i, k) = normal(rng);
    a(i) = x.row(i).sum() + normal(rng);
  }
  const auto row = rowsurv::weights::compute_row(x, a, 0.002);
  ASSERT_TRUE(row.optimal());
  EXPECT_LE(bal::abs_corr(x, a, row.weights).summary.max, 0.002 + 1e-8);
}

TEST(Balance, SummaryMedianConvention) {
  VectorXd odd(3);
  odd << 0.3, 0.1, 0.2;
  const auto s = bal::summarize(odd);
  EXPECT_EQ(s.min, 0.1);
  EXPECT_EQ(s.median, 0.2);
  EXPECT_EQ(s.max, 0.3);
  VectorXd even(4);
  even << 0.4, 0.1, 0.2, 0.3;
  EXPECT_DOUBLE_EQ(bal::summarize(even).median, 0.25);
}

TEST(Balance, IsBinary) {
  VectorXd b(3);
  b << 0, 1, 1;
  EXPECT_TRUE(bal::is_binary(b));
  b(0) = 0.5;
  EXPECT_FALSE(bal::is_binary(b));
}

}  // namespace
