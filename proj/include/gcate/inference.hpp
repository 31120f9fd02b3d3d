#pragma once

// Debiased inference on one column of B: projection direction, weighted
// bias correction, z statistics, lambda_n selection, multiple testing, and
// the sample-splitting variant.

#include "gcate/pipeline.hpp"

#include <optional>
#include <vector>

namespace gcate {

enum class WeightMode {
  PerGene,  // u solved per gene with that gene's weights
  Shared,   // one u from gene-averaged weights, sandwich variance per gene
};

/// How residuals are projected off Gamma across genes. Unweighted is the
/// plain P_Gamma^perp; Weighted regresses each sample's residual row on
/// Gamma with the weights omega_i (one Newton step in z_i).
enum class ProjectionRule { Weighted, Unweighted };

/// c2 values of the lambda_n scree: 0.001..0.01, 0.02..0.1, 0.2..1.
std::vector<double> default_c2_grid();

/// |median z| threshold for the lambda_n scree: 0.025 NegBin, 0.1 otherwise.
double default_median_threshold(const ExponentialFamily& fam);

struct DebiasConfig {
  Index coef_index = 0;            // zero-based column of X under test
  std::optional<double> c2;        // lambda_n = c2 sqrt(log n / n); nullopt = scree selection
  std::optional<double> tau_n;     // |x_i^T u| <= tau_n; nullopt drops the constraint
  WeightMode mode = WeightMode::PerGene;
  ProjectionRule projection = ProjectionRule::Weighted;
  std::optional<double> median_threshold;  // nullopt = family default
  std::vector<double> c2_grid = default_c2_grid();
};

/// argmin u^T S u subject to |S u - e_c|_inf <= lambda_n (and |X u|_inf <= tau_n).
VectorXd solve_projection_u(const Eigen::Ref<const MatrixXd>& S, Index coef_index, double lambda_n,
                            const MatrixXd* X = nullptr, std::optional<double> tau_n = std::nullopt);

/// Same with S = (1/n) sum_i omega_i x_i x_i^T.
VectorXd solve_projection_u(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& omega,
                            Index coef_index, double lambda_n,
                            std::optional<double> tau_n = std::nullopt);

/// Per-gene ingredients that do not depend on lambda_n.
struct DebiasInputs {
  Index n = 0;
  Index coef_index = 0;
  VectorXd b_hat;              // p
  std::vector<MatrixXd> S;     // per gene (1/n) X^T diag(omega_j) X
  MatrixXd score;              // d x p, (1/n) X^T (omega_j o E_j)
  MatrixXd shared_S;           // (1/n) X^T diag(mean_j omega_j) X
  MatrixXd shared_score;       // d x p with the averaged weights
  std::vector<MatrixXd> shared_meat;  // (1/n) X^T diag(omega_bar^2 / omega_j) X
  std::vector<bool> finite;
};

/// Residuals (t - mu) / (d mu / d eta), projected off Gamma across genes,
/// and weights omega = expected d^2 loss / d eta^2 at Theta.
DebiasInputs prepare_debias(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                            const Eigen::Ref<const MatrixXd>& Theta, const Eigen::Ref<const MatrixXd>& B,
                            const Eigen::Ref<const MatrixXd>& Gamma, const ColumnFamilies& fams,
                            Index coef_index, ProjectionRule rule = ProjectionRule::Weighted);

/// b_de = b_hat + u^T score, sigma^2 = u^T S u (sandwich in shared mode),
/// z and p-values; q-values are left empty.
InferenceResult finish_debias(const DebiasInputs& in, double lambda_n, WeightMode mode,
                              const Eigen::Ref<const MatrixXd>& X,
                              std::optional<double> tau_n = std::nullopt);

/// z = sqrt(n) b / sigma and two-sided normal p-values, filled in place.
void z_statistics(InferenceResult& res);

struct LambdaTraceEntry {
  double c2;
  double lambda_n;
  double median_z;
  double mad_z;
};

struct LambdaSelection {
  double c2 = 0.0;
  double lambda_n = 0.0;
  std::vector<LambdaTraceEntry> trace;
  bool feasible = true;
};

inline double lambda_n_from_c2(double c2, Index n) {
  return c2 * std::sqrt(std::log(static_cast<double>(n)) / static_cast<double>(n));
}

/// Largest c2 whose |median z| <= threshold; the smallest grid value (with
/// feasible = false) when none qualifies.
LambdaSelection select_lambda_n(const DebiasInputs& in, const Eigen::Ref<const MatrixXd>& X,
                                const DebiasConfig& cfg, double median_threshold);

/// Benjamini-Hochberg step-up adjusted p-values (NaN entries stay NaN).
VectorXd bh_adjust(const Eigen::Ref<const VectorXd>& pvalues);

/// Bonferroni two-sided cutoff Phi^{-1}(1 - alpha / (2 p)).
double bonferroni_cutoff(double alpha, Index p);

/// |z_j| > bonferroni_cutoff(alpha, p).
std::vector<bool> fwer_test(const Eigen::Ref<const VectorXd>& z, double alpha, Index p);

/// Debias a fit on its own data, choosing lambda_n as configured, with q-values.
InferenceResult run_inference(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                              const FactorModelFit& fit, const DebiasConfig& cfg,
                              LambdaSelection* selection = nullptr);

struct SplitConfig {
  double ratio = 1.0;  // fraction of samples used for inference; 1 = no split
  std::uint64_t seed = 0;
  bool strict_leave_one_out = false;
};

/// Estimate B and Gamma on one part, refit Z and debias on the other.
InferenceResult run_split_inference(const GlmDataset& data, const FitConfig& fit_cfg,
                                    const DebiasConfig& cfg, const SplitConfig& split,
                                    LambdaSelection* selection = nullptr);

}  // namespace gcate
