#pragma once

// Joint-likelihood information criterion and rank selection.

#include "gcate/optimize.hpp"

#include <string>
#include <vector>

namespace gcate {

struct JicTrace {
  std::vector<int> r_values;
  std::vector<double> deviance;  // per-cell deviance, deviance(Y, Theta) / (n p)
  std::vector<double> penalty;
  std::vector<double> jic;       // deviance + penalty
  std::vector<double> delta_deviance;  // decrease from the previous rank (NaN for the first)
  std::vector<double> delta_penalty;   // increase from the previous rank (NaN for the first)
  std::vector<int> skipped;            // ranks whose fit failed
  std::vector<std::string> messages;
  int selected_r = 0;
  double c_jic = 1.0;
};

/// c_jic (d + r) log(n ^ p) / (n ^ p).
double jic_penalty(Index n, Index p, Index d, Index r, double c_jic);

/// deviance(Y, Theta) / (n p) + jic_penalty(n, p, d, r, c_jic).
double jic(const Eigen::Ref<const MatrixXd>& Theta_hat, const Eigen::Ref<const MatrixXd>& Y,
           const ColumnFamilies& fams, Index d, Index r, double c_jic);

/// Stage-1 fits for r in [r_min, r_max]; argmin JIC, ties to the smaller r.
JicTrace select_rank(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                     const ColumnFamilies& fams, int r_min, int r_max, double c_jic,
                     const OptimOptions& opts);

}  // namespace gcate
