#pragma once

#include <Eigen/Dense>

namespace rowsurv::balance {

enum class Metric { Asmd, AbsCorrelation };

struct Summary {
  double min = 0.0;
  double median = 0.0;  ///< midpoint of the two central values for even counts
  double max = 0.0;
};

struct BalanceReport {
  Eigen::VectorXd per_covariate;
  Metric metric = Metric::Asmd;
  Summary summary;
  bool weighted = false;  ///< false when the weights were uniform
};

Summary summarize(const Eigen::VectorXd& values);

/// Absolute standardized mean difference between the a = 1 and a = 0 groups.
///
/// The denominator is the unweighted pooled SD sqrt((s1^2 + s0^2) / 2) of the
/// raw data, so it does not move with the weights. Columns holding only 0/1
/// values are reported as raw differences in weighted proportions.
/// Throws EmptyGroup when a group has no units or no positive weight.
BalanceReport asmd(const Eigen::MatrixXd& x, const Eigen::VectorXd& a, const Eigen::VectorXd& w);

/// |rho_k(w)| on the standardized design. Throws ConstantColumn.
BalanceReport abs_corr(const Eigen::MatrixXd& x, const Eigen::VectorXd& a, const Eigen::VectorXd& w);

/// True iff every entry is exactly 0 or 1.
bool is_binary(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace rowsurv::balance
