#pragma once

#include <Eigen/Dense>

namespace gcate {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile, accurate to ~1e-15 in double precision.
double normal_quantile(double p);

/// Two-sided normal p-value 2 (1 - Phi(|z|)).
double two_sided_pvalue(double z);

/// Median ignoring NaN entries; NaN if none remain.
double median(const Eigen::Ref<const Eigen::VectorXd>& v);

/// Median absolute deviation scaled by 1.4826 (normal-consistent).
double normalized_mad(const Eigen::Ref<const Eigen::VectorXd>& v);

/// Average ranks (ties share the mean rank), 1-based.
Eigen::VectorXd average_ranks(const Eigen::Ref<const Eigen::VectorXd>& v);

/// Spearman rank correlation over pairs where both entries are finite.
double spearman(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

}  // namespace gcate
