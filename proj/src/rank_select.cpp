#include "gcate/rank_select.hpp"

#include <cmath>
#include <limits>

namespace gcate {

double jic_penalty(Index n, Index p, Index d, Index r, double c_jic) {
  const double m = static_cast<double>(std::min(n, p));
  return c_jic * static_cast<double>(d + r) * std::log(m) / m;
}

double jic(const Eigen::Ref<const MatrixXd>& Theta_hat, const Eigen::Ref<const MatrixXd>& Y,
           const ColumnFamilies& fams, Index d, Index r, double c_jic) {
  const double cells = static_cast<double>(Y.rows()) * static_cast<double>(Y.cols());
  return deviance(Y, Theta_hat, fams) / cells + jic_penalty(Y.rows(), Y.cols(), d, r, c_jic);
}

JicTrace select_rank(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                     const ColumnFamilies& fams, int r_min, int r_max, double c_jic,
                     const OptimOptions& opts) {
  const Index n = Y.rows();
  const Index p = Y.cols();
  if (r_min < 1 || r_min > r_max || r_max > std::min(n, p))
    throw InvalidInput("select_rank: need 1 <= r_min <= r_max <= min(n, p)");
  if (!(c_jic >= 0)) throw InvalidInput("select_rank: c_jic must be non-negative");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double cells = static_cast<double>(n) * static_cast<double>(p);
  JicTrace trace;
  trace.c_jic = c_jic;
  for (int r = r_min; r <= r_max; ++r) {
    double dev = nan;
    try {
      const Stage1Result s1 = solve_stage1(Y, X, r, fams, opts);
      dev = deviance(Y, s1.Theta0, fams) / cells;
      if (s1.info.aborted) throw DomainError(s1.info.message);
    } catch (const std::exception& e) {
      trace.skipped.push_back(r);
      trace.messages.push_back("rank " + std::to_string(r) + ": " + e.what());
      dev = nan;
    }
    const double pen = jic_penalty(n, p, X.cols(), r, c_jic);
    trace.r_values.push_back(r);
    trace.deviance.push_back(dev);
    trace.penalty.push_back(pen);
    trace.jic.push_back(dev + pen);
    const std::size_t k = trace.r_values.size() - 1;
    trace.delta_deviance.push_back(k == 0 ? nan : trace.deviance[k - 1] - dev);
    trace.delta_penalty.push_back(k == 0 ? nan : pen - trace.penalty[k - 1]);
  }
  double best = std::numeric_limits<double>::infinity();
  trace.selected_r = 0;
  for (std::size_t k = 0; k < trace.jic.size(); ++k)
    if (std::isfinite(trace.jic[k]) && trace.jic[k] < best) {
      best = trace.jic[k];
      trace.selected_r = trace.r_values[k];
    }
  if (trace.selected_r == 0) throw DomainError("select_rank: every rank failed to fit");
  return trace;
}

}  // namespace gcate
