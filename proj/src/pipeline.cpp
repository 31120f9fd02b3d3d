#include "gcate/pipeline.hpp"

namespace gcate {

VectorXd estimate_dispersions(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                              double ridge) {
  const MarginalGlmFit pois = fit_marginal_glm(X, Y, ExponentialFamily::poisson(), ridge);
  const MatrixXd mu = (X * pois.F.transpose()).array().exp();
  VectorXd phi(Y.cols());
  for (Index j = 0; j < Y.cols(); ++j) phi(j) = estimate_dispersion(Y.col(j), mu.col(j));
  return phi;
}

ColumnFamilies resolve_families(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                                const ExponentialFamily& family, std::optional<double> phi) {
  if (family.kind != FamilyKind::NegBin) return family;
  if (phi) {
    if (!(*phi > 0)) throw InvalidInput("phi must be positive");
    return family.with_aux(*phi);
  }
  return {family, estimate_dispersions(Y, X)};
}

OptimOptions effective_options(const FitConfig& cfg) {
  OptimOptions opts = cfg.opts;
  opts.grad_ball_radius = 2.0 * cfg.c_prime.value_or(default_c_prime(cfg.family));
  return opts;
}

FactorModelFit fit_gcate(const GlmDataset& data, const FitConfig& cfg) {
  data.validate(cfg.family);
  return fit_gcate(data.Y, data.X, resolve_families(data.Y, data.X, cfg.family, cfg.phi), cfg);
}

FactorModelFit fit_gcate(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                         const ColumnFamilies& fams, const FitConfig& cfg) {
  const OptimOptions opts = effective_options(cfg);
  opts.validate();
  if (cfg.rank < 0 || cfg.rank > std::min(Y.rows(), Y.cols()))
    throw InvalidInput("rank must lie in [0, min(n, p)]");

  FactorModelFit fit;
  fit.family = fams;
  fit.lambda = cfg.lambda.value_or(default_lambda(Y.rows(), Y.cols(), cfg.family, cfg.c1));
  if (!(fit.lambda >= 0)) throw InvalidInput("lambda must be non-negative");
  auto& diag = fit.diagnostics;

  Stage1Result s1 = solve_stage1(Y, X, cfg.rank, fams, opts);
  diag.warnings = s1.warnings;
  diag.stage1_iterations = s1.info.iterations;
  diag.stage1_converged = s1.info.converged;
  diag.stage1_trace = s1.info.trace;
  diag.stage1_objective = s1.info.trace.empty() ? 0.0 : s1.info.trace.back();
  fit.F_hat = s1.F;
  fit.W0_hat = s1.W0;
  fit.Gamma0_hat = s1.Gamma0;

  Stage2Result s2 = solve_stage2_extract(s1.W0, s1.Gamma0);
  diag.warnings.insert(diag.warnings.end(), s2.warnings.begin(), s2.warnings.end());
  fit.W_hat = s2.W;
  fit.Gamma_hat = s2.Gamma;
  fit.r = static_cast<int>(s2.Gamma.cols());

  Stage3Result s3 = solve_stage3(Y, X, fit.Gamma_hat, fit.F_hat, fit.W_hat, fit.lambda, fams, opts);
  diag.stage3_iterations = s3.info.iterations;
  diag.stage3_converged = s3.info.converged;
  diag.stage3_trace = s3.info.trace;
  diag.stage3_objective = s3.info.trace.empty() ? 0.0 : s3.info.trace.back();
  if (!s3.info.message.empty()) diag.warnings.push_back("stage 3: " + s3.info.message);
  fit.B_hat = s3.B;
  fit.Z_hat = s3.Z;
  fit.Theta_hat = build_theta(X, fit.B_hat, fit.Z_hat, fit.Gamma_hat);
  return fit;
}

}  // namespace gcate
