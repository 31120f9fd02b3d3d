#pragma once

// Alternating maximization for generalized low-rank GLMs: per-gene GLM
// initialization, SVD factor initialization, the block-alternating solver,
// and the three estimation stages built on top of it.

#include "gcate/model.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gcate {

/// How a block subproblem picks its descent direction. Newton uses the
/// block's expected Hessian (Fisher scoring; proximal Newton on l1
/// coordinates) and a unit initial step. Gradient is plain projected
/// gradient with the Armijo initial step below.
enum class StepRule { Newton, Gradient };

struct OptimOptions {
  int max_outer_iters = 200;
  double obj_tol = 1e-4;
  int patience = 20;
  double armijo_init_step = 0.1;
  double armijo_shrink = 0.5;
  double armijo_tol = 1e-4;
  int armijo_max_iters = 20;
  double grad_ball_radius = 2e5;
  double lambda = 0.0;
  double ridge_init = 1e-5;
  StepRule step_rule = StepRule::Newton;
  int inner_steps = 1;      // block steps per half sweep
  bool extrapolate = true;  // try L + beta dL, R + beta dR after each sweep

  void validate() const;
};

/// C' of the gradient-ball heuristic: 1e5 (Poisson and others), 1e3 (NegBin).
double default_c_prime(const ExponentialFamily& fam);

/// Options with the gradient-ball radius set to 2 C' for the family.
OptimOptions default_options(const ExponentialFamily& fam);

/// lambda = c1 sqrt(log p / n); c1 = 0.02, or 0.01 for NegBin, unless overridden.
double default_lambda(Index n, Index p, const ExponentialFamily& fam,
                      std::optional<double> c1 = std::nullopt);

// ---------------------------------------------------------------------------
// Per-gene GLM

struct GlmFit {
  VectorXd coef;
  MatrixXd information;  // X^T W X at the solution (unnormalized)
  bool converged = false;
  int iterations = 0;
  double ridge_used = 0.0;
};

/// Newton / Fisher-scoring fit of one response column on X, minimizing
/// (1/n) sum loss + (ridge/2) |f|^2. With ridge == 0 a ridge of
/// kAutoRidge is switched on when the Hessian condition number exceeds 1e8.
GlmFit fit_glm(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
               const ExponentialFamily& fam, double ridge, int max_iters = 100);

inline constexpr double kAutoRidge = 1e-5;

struct MarginalGlmFit {
  MatrixXd F;  // p x d
  std::vector<bool> converged;
  std::vector<std::string> warnings;
};

MarginalGlmFit fit_marginal_glm(const Eigen::Ref<const MatrixXd>& X,
                                const Eigen::Ref<const MatrixXd>& Y, const ColumnFamilies& fams,
                                double ridge);

// ---------------------------------------------------------------------------
// Initialization

struct FactorInit {
  MatrixXd W0;      // n x r
  MatrixXd Gamma0;  // p x r
};

/// Leading-r factors of the transformed responses (log(Y+1) for count
/// families), with the sample factors projected off the column space of X.
FactorInit init_factors_svd(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                            Index r, const ExponentialFamily& fam);

// ---------------------------------------------------------------------------
// Alternating maximization over Theta = L R^T

struct ColumnRange {
  Index begin = 0;
  Index count = 0;
  Index end() const { return begin + count; }
};

struct AlternatingProblem {
  ColumnRange left_free;   // columns of L updated by the row half-step
  ColumnRange right_free;  // columns of R updated by the column half-step
  ColumnRange right_l1;    // columns of R carrying the l1 penalty (inside right_free)
  /// Applied after each row / column half-step; must leave L R^T unchanged
  /// up to rounding (constraint projections with compensation).
  std::function<void(MatrixXd& L, MatrixXd& R)> after_left;
  std::function<void(MatrixXd& L, MatrixXd& R)> after_right;
};

struct AlternatingResult {
  MatrixXd L;
  MatrixXd R;
  std::vector<double> trace;  // objective after each outer iteration (index 0 = start)
  int iterations = 0;
  bool converged = false;
  bool aborted = false;
  std::string message;
};

/// Penalized objective (1/n) sum loss(L R^T) + lambda |R_l1|_1.
double alternating_objective(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& L,
                             const Eigen::Ref<const MatrixXd>& R, const ColumnFamilies& fams,
                             const AlternatingProblem& problem, double lambda);

AlternatingResult alternating_max(const Eigen::Ref<const MatrixXd>& Y, MatrixXd L_init,
                                  MatrixXd R_init, const ColumnFamilies& fams,
                                  const AlternatingProblem& problem, const OptimOptions& opts);

// ---------------------------------------------------------------------------
// Stages

struct Stage1Result {
  MatrixXd F;       // p x d
  MatrixXd W0;      // n x r
  MatrixXd Gamma0;  // p x r
  MatrixXd Theta0;  // n x p
  AlternatingResult info;
  std::vector<std::string> warnings;
};

/// min L(X F^T + W Gamma^T) subject to P_X W = 0.
Stage1Result solve_stage1(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                          Index r, const ColumnFamilies& fams, const OptimOptions& opts);

struct Stage2Result {
  MatrixXd W;      // n x r
  MatrixXd Gamma;  // p x r
  VectorXd sigma;  // diagonal of (1/n) W^T W = (1/p) Gamma^T Gamma
  std::vector<std::string> warnings;
};

/// W0 Gamma0^T = sqrt(np) U S V^T; W = sqrt(n) U S^{1/2}, Gamma = sqrt(p) V S^{1/2}.
Stage2Result solve_stage2_extract(const Eigen::Ref<const MatrixXd>& W0,
                                  const Eigen::Ref<const MatrixXd>& Gamma0);

struct Stage3Result {
  MatrixXd B;  // p x d
  MatrixXd Z;  // n x r
  AlternatingResult info;
};

/// min L(X B^T + Z Gamma^T) + lambda |B|_1 subject to P_Gamma B = 0, Gamma fixed.
/// Starts from B = P_Gamma^perp F and the Z that reproduces X F^T + W Gamma^T.
Stage3Result solve_stage3(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                          const Eigen::Ref<const MatrixXd>& Gamma_hat,
                          const Eigen::Ref<const MatrixXd>& F_init,
                          const Eigen::Ref<const MatrixXd>& W_init, double lambda,
                          const ColumnFamilies& fams, const OptimOptions& opts);

/// Rows of Z for fixed B and Gamma (the latent-factor refit used on the
/// inference half of a sample split).
MatrixXd refit_latent_factors(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                              const Eigen::Ref<const MatrixXd>& B, const Eigen::Ref<const MatrixXd>& Gamma,
                              const ColumnFamilies& fams, const OptimOptions& opts,
                              const std::optional<MatrixXd>& Z_start = std::nullopt);

}  // namespace gcate
