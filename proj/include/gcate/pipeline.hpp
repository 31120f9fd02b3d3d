#pragma once

// End-to-end estimation: dispersion, the three stages, and the fit record.

#include "gcate/optimize.hpp"

#include <optional>

namespace gcate {

struct FitConfig {
  ExponentialFamily family = ExponentialFamily::poisson();
  Index rank = 1;
  std::optional<double> lambda;  // lasso level; nullopt = default_lambda
  std::optional<double> c1;      // overrides the default_lambda constant
  std::optional<double> phi;     // NegBin phi; nullopt = estimated per gene
  OptimOptions opts;             // grad_ball_radius is reset from the family unless c_prime is set
  std::optional<double> c_prime;
};

/// Per-gene NB phi by moments from the marginal Poisson GLM means.
VectorXd estimate_dispersions(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                              double ridge = kAutoRidge);

/// Family per column: NegBin phi fixed or estimated, other families unchanged.
ColumnFamilies resolve_families(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                                const ExponentialFamily& family, std::optional<double> phi);

/// Optimizer options for a config: the family gradient ball unless overridden.
OptimOptions effective_options(const FitConfig& cfg);

FactorModelFit fit_gcate(const GlmDataset& data, const FitConfig& cfg);

/// Same, with the families already resolved (used by sample splitting).
FactorModelFit fit_gcate(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                         const ColumnFamilies& fams, const FitConfig& cfg);

}  // namespace gcate
