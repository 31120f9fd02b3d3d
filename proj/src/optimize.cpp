#include "gcate/optimize.hpp"

#include "gcate/linalg.hpp"
#include "gcate/parallel.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <vector>

namespace gcate {

void OptimOptions::validate() const {
  if (max_outer_iters < 1) throw InvalidInput("max_outer_iters must be positive");
  if (!(obj_tol > 0)) throw InvalidInput("obj_tol must be positive");
  if (patience < 1) throw InvalidInput("patience must be positive");
  if (!(armijo_init_step > 0)) throw InvalidInput("armijo_init_step must be positive");
  if (!(armijo_shrink > 0 && armijo_shrink < 1)) throw InvalidInput("armijo_shrink must lie in (0, 1)");
  if (!(armijo_tol > 0 && armijo_tol < 1)) throw InvalidInput("armijo_tol must lie in (0, 1)");
  if (armijo_max_iters < 1) throw InvalidInput("armijo_max_iters must be positive");
  if (!(grad_ball_radius > 0)) throw InvalidInput("grad_ball_radius must be positive");
  if (!(lambda >= 0)) throw InvalidInput("lambda must be non-negative");
  if (!(ridge_init >= 0)) throw InvalidInput("ridge_init must be non-negative");
}

double default_c_prime(const ExponentialFamily& fam) {
  return fam.kind == FamilyKind::NegBin ? 1e3 : 1e5;
}

OptimOptions default_options(const ExponentialFamily& fam) {
  OptimOptions opts;
  opts.grad_ball_radius = 2.0 * default_c_prime(fam);
  return opts;
}

double default_lambda(Index n, Index p, const ExponentialFamily& fam, std::optional<double> c1) {
  const double c = c1.value_or(fam.kind == FamilyKind::NegBin ? 0.01 : 0.02);
  if (n < 1 || p < 1) throw InvalidInput("default_lambda: n and p must be positive");
  return c * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

// ---------------------------------------------------------------------------

FactorInit init_factors_svd(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                            Index r, const ExponentialFamily& fam) {
  if (r < 0 || r > std::min(Y.rows(), Y.cols()))
    throw InvalidInput("init_factors_svd: rank " + std::to_string(r) + " exceeds min(n, p)");
  if (X.rows() != Y.rows()) throw InvalidInput("init_factors_svd: row mismatch between X and Y");
  if (r == 0) return {MatrixXd(Y.rows(), 0), MatrixXd(Y.cols(), 0)};
  MatrixXd M(Y.rows(), Y.cols());
  switch (fam.kind) {
    case FamilyKind::Poisson:
    case FamilyKind::NegBin:
      M = (Y.array() + 1.0).log();
      break;
    case FamilyKind::Gaussian:
      M = Y / std::sqrt(fam.aux);
      break;
    case FamilyKind::Bernoulli:
    case FamilyKind::Binomial:
      M = ((Y.array() + 0.5) / (fam.aux - Y.array() + 0.5)).log();
      break;
  }
  const ColumnSpaceProjector<double> px(X);
  const CondensedSvd svd = truncated_svd(px.residual(M), r);
  const VectorXd root = svd.sigma.cwiseSqrt();
  return {svd.U * root.asDiagonal(), svd.V * root.asDiagonal()};
}

// ---------------------------------------------------------------------------

namespace {

double soft_threshold(double x, double thresh) {
  if (x > thresh) return x - thresh;
  if (x < -thresh) return x + thresh;
  return 0.0;
}

struct BlockSpec {
  double scale;       // 1/p for rows, 1/n for columns
  double lambda;
  Index l1_begin;     // penalized coordinates of the block, relative
  Index l1_count;
};

template <typename FamAt>
bool block_feasible(const FamAt& fam_at, const VectorXd& eta) {
  for (Index k = 0; k < eta.size(); ++k) {
    if (!std::isfinite(eta(k)) || !fam_at(k).predictor_domain().contains(eta(k))) return false;
  }
  return true;
}

template <typename FamAt>
double block_loss(const FamAt& fam_at, const VectorXd& t, const VectorXd& eta) {
  double total = 0.0;
  for (Index k = 0; k < eta.size(); ++k) total += predictor_loss(fam_at(k), t(k), eta(k));
  return total;
}

double l1_part(const VectorXd& x, const BlockSpec& spec) {
  if (spec.l1_count == 0 || spec.lambda == 0.0) return 0.0;
  return spec.lambda * x.segment(spec.l1_begin, spec.l1_count).lpNorm<1>();
}

// Minimizes g^T d + d^T H d / 2 + lambda |x_l1 + d_l1|_1 by cyclic coordinate descent.
VectorXd prox_newton_direction(const MatrixXd& H, const VectorXd& g, const VectorXd& x,
                               const BlockSpec& spec) {
  const Index k = x.size();
  VectorXd delta = VectorXd::Zero(k);
  VectorXd Hd = VectorXd::Zero(k);
  const double tol = 1e-13 * (1.0 + x.lpNorm<Eigen::Infinity>());
  for (int sweep = 0; sweep < 500; ++sweep) {
    double max_change = 0.0;
    for (Index c = 0; c < k; ++c) {
      const double hcc = H(c, c);
      const double grad_c = g(c) + Hd(c);
      double next;
      if (c >= spec.l1_begin && c < spec.l1_begin + spec.l1_count) {
        const double z = x(c) + delta(c);
        next = soft_threshold(z - grad_c / hcc, spec.lambda / hcc) - x(c);
      } else {
        next = delta(c) - grad_c / hcc;
      }
      const double change = next - delta(c);
      if (change != 0.0) {
        Hd += change * H.col(c);
        delta(c) = next;
        max_change = std::max(max_change, std::abs(change));
      }
    }
    if (max_change <= tol) break;
  }
  return delta;
}

// One descent step on a row or column block:
//   minimize scale * sum_k loss(t_k, eta_k + (A d)_k) + lambda |x_l1 + d_l1|_1.
// Updates x and eta in place; returns whether the block moved.
template <typename FamAt>
bool block_step(const FamAt& fam_at, const VectorXd& t, VectorXd& eta, const MatrixXd& A,
                VectorXd& x, const BlockSpec& spec, const OptimOptions& opts) {
  const Index m = eta.size();
  const Index k = x.size();
  VectorXd grad(m), weight(m);
  double loss = 0.0;
  for (Index i = 0; i < m; ++i) {
    const auto ev = evaluate_predictor(fam_at(i), t(i), eta(i));
    loss += ev.loss;
    grad(i) = ev.grad;
    weight(i) = ev.weight;
  }
  const double f0 = spec.scale * loss + l1_part(x, spec);
  if (!std::isfinite(f0)) return false;

  const VectorXd g_raw = spec.scale * (A.transpose() * grad);
  VectorXd g = g_raw;
  const double gnorm = g.norm();
  if (gnorm > opts.grad_ball_radius) g *= opts.grad_ball_radius / gnorm;
  const bool penalized = spec.l1_count > 0 && spec.lambda > 0.0;
  const double tiny = 1e-15 * std::max(1.0, std::abs(f0));

  auto try_direction = [&](const VectorXd& gd, const VectorXd& delta, double step0, bool rescale_prox) {
    double step = step0;
    for (int ls = 0; ls < opts.armijo_max_iters; ++ls, step *= opts.armijo_shrink) {
      VectorXd x_new;
      if (rescale_prox) {
        // Proximal gradient: the trial point is prox(x - step g), not x + step d.
        x_new = x - step * gd;
        for (Index c = spec.l1_begin; c < spec.l1_begin + spec.l1_count; ++c)
          x_new(c) = soft_threshold(x_new(c), step * spec.lambda);
      } else {
        x_new = x + step * delta;
      }
      const VectorXd d = x_new - x;
      const double decrease =
          gd.dot(d) + (penalized ? l1_part(x_new, spec) - l1_part(x, spec) : 0.0);
      if (!(decrease < -tiny * 1e-3) && !rescale_prox) return false;
      if (!(decrease < 0)) continue;
      const VectorXd eta_new = eta + A * d;
      if (!block_feasible(fam_at, eta_new)) continue;
      const double f_new = spec.scale * block_loss(fam_at, t, eta_new) + l1_part(x_new, spec);
      if (f_new <= f0 + opts.armijo_tol * decrease) {
        x = x_new;
        eta = eta_new;
        return true;
      }
    }
    return false;
  };

  if (opts.step_rule == StepRule::Newton) {
    MatrixXd H = spec.scale * (A.transpose() * weight.asDiagonal() * A);
    const double level = H.diagonal().cwiseAbs().maxCoeff();
    H.diagonal().array() += 1e-10 * level + 1e-300;
    VectorXd delta;
    if (penalized) {
      delta = prox_newton_direction(H, g_raw, x, spec);
    } else {
      const Eigen::LDLT<MatrixXd> ldlt(H);
      delta = -ldlt.solve(g_raw);
    }
    if (delta.allFinite() && delta.size() == k) {
      const double decrease =
          g_raw.dot(delta) + (penalized ? l1_part(x + delta, spec) - l1_part(x, spec) : 0.0);
      if (!(decrease < -tiny)) return false;
      if (try_direction(g_raw, delta, 1.0, false)) return true;
    }
  }
  if (!(gnorm > 0)) return false;
  if (penalized) return try_direction(g, VectorXd(), opts.armijo_init_step, true);
  return try_direction(g, -g, opts.armijo_init_step, false);
}

bool matrix_feasible(const MatrixXd& eta, const std::vector<ExponentialFamily>& famv) {
  for (Index j = 0; j < eta.cols(); ++j) {
    const NaturalDomain dom = famv[static_cast<std::size_t>(j)].predictor_domain();
    for (Index i = 0; i < eta.rows(); ++i)
      if (!std::isfinite(eta(i, j)) || !dom.contains(eta(i, j))) return false;
  }
  return true;
}

double matrix_loss(const MatrixXd& T, const MatrixXd& eta, const std::vector<ExponentialFamily>& famv) {
  double total = 0.0;
  for (Index j = 0; j < eta.cols(); ++j) {
    const ExponentialFamily& fam = famv[static_cast<std::size_t>(j)];
    const NaturalDomain dom = fam.predictor_domain();
    for (Index i = 0; i < eta.rows(); ++i) {
      if (!std::isfinite(eta(i, j)) || !dom.contains(eta(i, j)))
        return std::numeric_limits<double>::infinity();
      total += predictor_loss(fam, T(i, j), eta(i, j));
    }
  }
  return total / static_cast<double>(eta.rows());
}

double penalty(const MatrixXd& R, const AlternatingProblem& problem, double lambda) {
  if (problem.right_l1.count == 0 || lambda == 0.0) return 0.0;
  return lambda * R.middleCols(problem.right_l1.begin, problem.right_l1.count).cwiseAbs().sum();
}

std::vector<ExponentialFamily> expand_families(const ColumnFamilies& fams, Index p) {
  std::vector<ExponentialFamily> famv;
  famv.reserve(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) famv.push_back(fams[j]);
  return famv;
}

MatrixXd sufficient_stats(const Eigen::Ref<const MatrixXd>& Y, const std::vector<ExponentialFamily>& famv) {
  MatrixXd T(Y.rows(), Y.cols());
  for (Index j = 0; j < Y.cols(); ++j)
    for (Index i = 0; i < Y.rows(); ++i)
      T(i, j) = sufficient_stat(famv[static_cast<std::size_t>(j)], Y(i, j));
  return T;
}

void check_range(const ColumnRange& range, Index k, const char* what) {
  if (range.begin < 0 || range.count < 0 || range.end() > k)
    throw InvalidInput(std::string("alternating_max: ") + what + " range out of bounds");
}

constexpr int kMaxExtrapolationGrowth = 8;

}  // namespace

double alternating_objective(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& L,
                             const Eigen::Ref<const MatrixXd>& R, const ColumnFamilies& fams,
                             const AlternatingProblem& problem, double lambda) {
  const auto famv = expand_families(fams, Y.cols());
  const MatrixXd eta = L * R.transpose();
  return matrix_loss(sufficient_stats(Y, famv), eta, famv) + penalty(R, problem, lambda);
}

AlternatingResult alternating_max(const Eigen::Ref<const MatrixXd>& Y, MatrixXd L, MatrixXd R,
                                  const ColumnFamilies& fams, const AlternatingProblem& problem,
                                  const OptimOptions& opts) {
  opts.validate();
  const Index n = Y.rows();
  const Index p = Y.cols();
  const Index k = L.cols();
  if (L.rows() != n || R.rows() != p || R.cols() != k)
    throw InvalidInput("alternating_max: factor shapes do not match Y");
  check_range(problem.left_free, k, "left_free");
  check_range(problem.right_free, k, "right_free");
  check_range(problem.right_l1, k, "right_l1");
  if (problem.right_l1.count > 0 && (problem.right_l1.begin < problem.right_free.begin ||
                                     problem.right_l1.end() > problem.right_free.end()))
    throw InvalidInput("alternating_max: l1 columns must be free columns");

  const auto famv = expand_families(fams, p);
  const MatrixXd T = sufficient_stats(Y, famv);
  MatrixXd eta = L * R.transpose();
  if (!matrix_feasible(eta, famv))
    throw DomainError("alternating_max: initial natural parameters are outside the domain");

  AlternatingResult res;
  double obj = matrix_loss(T, eta, famv) + penalty(R, problem, opts.lambda);
  res.trace.push_back(obj);

  const BlockSpec row_spec{1.0 / static_cast<double>(p), 0.0, 0, 0};
  const BlockSpec col_spec{1.0 / static_cast<double>(n), opts.lambda,
                           problem.right_l1.begin - problem.right_free.begin, problem.right_l1.count};
  int stall = 0;
  double beta = 1.0;
  for (int iter = 1; iter <= opts.max_outer_iters; ++iter) {
    const MatrixXd L_prev = L;
    const MatrixXd R_prev = R;

    if (problem.left_free.count > 0) {
      const MatrixXd A = R.middleCols(problem.left_free.begin, problem.left_free.count);
      parallel_for(n, [&](std::ptrdiff_t i) {
        const VectorXd t = T.row(i).transpose();
        VectorXd e = eta.row(i).transpose();
        VectorXd x = L.row(i).segment(problem.left_free.begin, problem.left_free.count).transpose();
        auto fam_at = [&](Index j) -> const ExponentialFamily& { return famv[static_cast<std::size_t>(j)]; };
        bool moved = false;
        for (int inner = 0; inner < opts.inner_steps && block_step(fam_at, t, e, A, x, row_spec, opts); ++inner)
          moved = true;
        if (moved) {
          L.row(i).segment(problem.left_free.begin, problem.left_free.count) = x.transpose();
          eta.row(i) = e.transpose();
        }
      });
      if (problem.after_left) {
        problem.after_left(L, R);
        eta.noalias() = L * R.transpose();
      }
    }

    if (problem.right_free.count > 0) {
      const MatrixXd A = L.middleCols(problem.right_free.begin, problem.right_free.count);
      parallel_for(p, [&](std::ptrdiff_t j) {
        const VectorXd t = T.col(j);
        VectorXd e = eta.col(j);
        VectorXd x = R.row(j).segment(problem.right_free.begin, problem.right_free.count).transpose();
        const ExponentialFamily& fam = famv[static_cast<std::size_t>(j)];
        auto fam_at = [&](Index) -> const ExponentialFamily& { return fam; };
        bool moved = false;
        for (int inner = 0; inner < opts.inner_steps && block_step(fam_at, t, e, A, x, col_spec, opts); ++inner)
          moved = true;
        if (moved) {
          R.row(j).segment(problem.right_free.begin, problem.right_free.count) = x.transpose();
          eta.col(j) = e;
        }
      });
      if (problem.after_right) {
        problem.after_right(L, R);
        eta.noalias() = L * R.transpose();
      }
    }

    double obj_new = matrix_loss(T, eta, famv) + penalty(R, problem, opts.lambda);
    if (!std::isfinite(obj_new)) {
      L = L_prev;
      R = R_prev;
      res.aborted = true;
      res.message = "objective became non-finite at iteration " + std::to_string(iter) +
                    "; returning the last feasible iterate";
      break;
    }
    if (opts.extrapolate) {
      // Over-relaxation along the last sweep, kept only when it lowers the objective.
      const MatrixXd dL = L - L_prev;
      const MatrixXd dR = R - R_prev;
      for (int grow = 0; grow < kMaxExtrapolationGrowth; ++grow) {
        MatrixXd L_x = L + beta * dL;
        MatrixXd R_x = R + beta * dR;
        MatrixXd eta_x = L_x * R_x.transpose();
        const double obj_x = matrix_feasible(eta_x, famv)
                                 ? matrix_loss(T, eta_x, famv) + penalty(R_x, problem, opts.lambda)
                                 : std::numeric_limits<double>::infinity();
        if (!(obj_x < obj_new)) {
          beta = std::max(0.5 * beta, 0.25);
          break;
        }
        L = std::move(L_x);
        R = std::move(R_x);
        eta = std::move(eta_x);
        obj_new = obj_x;
        beta = std::min(2.0 * beta, 1e4);
      }
    }
    res.trace.push_back(obj_new);
    res.iterations = iter;
    const double improvement = obj - obj_new;
    obj = obj_new;
    stall = improvement < opts.obj_tol ? stall + 1 : 0;
    if (stall >= opts.patience) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged && !res.aborted)
    res.message = "reached max_outer_iters without meeting the stopping rule";
  res.L = std::move(L);
  res.R = std::move(R);
  return res;
}

// ---------------------------------------------------------------------------

constexpr int kWarmStartSteps = 50;

Stage1Result solve_stage1(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                          Index r, const ColumnFamilies& fams, const OptimOptions& opts) {
  opts.validate();
  const Index n = Y.rows();
  const Index d = X.cols();
  if (X.rows() != n) throw InvalidInput("solve_stage1: row mismatch between X and Y");
  if (r < 0 || r > std::min(n, Y.cols())) throw InvalidInput("solve_stage1: invalid rank");

  Stage1Result out;
  MarginalGlmFit glm = fit_marginal_glm(X, Y, fams, opts.ridge_init);
  out.warnings = std::move(glm.warnings);
  if (r == 0) {
    out.F = glm.F;
    out.W0 = MatrixXd(n, 0);
    out.Gamma0 = MatrixXd(Y.cols(), 0);
    out.Theta0 = X * glm.F.transpose();
    out.info.converged = true;
    out.info.trace = {alternating_objective(Y, X, glm.F, fams, {}, 0.0)};
    return out;
  }

  FactorInit init = init_factors_svd(Y, X, r, fams.base);
  MatrixXd L(n, d + r), R(Y.cols(), d + r);
  L << X, init.W0;
  R << glm.F, init.Gamma0;
  const auto famv = expand_families(fams, Y.cols());
  for (int k = 0; k < 60 && !matrix_feasible(L * R.transpose(), famv); ++k) L.rightCols(r) *= 0.5;
  if (!matrix_feasible(L * R.transpose(), famv))
    throw DomainError("solve_stage1: could not find a feasible starting point");

  const ColumnSpaceProjector<double> px(X);
  AlternatingProblem problem;
  problem.left_free = {d, r};
  problem.right_free = {0, d + r};
  problem.after_left = [&px, d, r](MatrixXd& Lm, MatrixXd& Rm) {
    const MatrixXd C = px.coefficients(Lm.rightCols(r));
    Lm.rightCols(r) -= Lm.leftCols(d) * C;
    Rm.leftCols(d) += Rm.rightCols(r) * C.transpose();
  };
  OptimOptions local = opts;
  local.lambda = 0.0;
  {
    // Fit the gene blocks to the SVD sample factors before alternating.
    AlternatingProblem warm;
    warm.left_free = {d, 0};
    warm.right_free = problem.right_free;
    OptimOptions w = local;
    w.max_outer_iters = 1;
    w.inner_steps = kWarmStartSteps;
    w.extrapolate = false;
    AlternatingResult pre = alternating_max(Y, L, R, fams, warm, w);
    R = std::move(pre.R);
  }
  out.info = alternating_max(Y, std::move(L), std::move(R), fams, problem, local);
  out.F = out.info.R.leftCols(d);
  out.W0 = out.info.L.rightCols(r);
  out.Gamma0 = out.info.R.rightCols(r);
  out.Theta0 = out.info.L * out.info.R.transpose();
  if (!out.info.message.empty()) out.warnings.push_back("stage 1: " + out.info.message);
  return out;
}

Stage2Result solve_stage2_extract(const Eigen::Ref<const MatrixXd>& W0,
                                  const Eigen::Ref<const MatrixXd>& Gamma0) {
  if (W0.cols() != Gamma0.cols()) throw InvalidInput("solve_stage2_extract: rank mismatch");
  const Index n = W0.rows();
  const Index p = Gamma0.rows();
  Stage2Result out;
  const CondensedSvd svd = product_svd(W0, Gamma0);
  const double top = svd.sigma.size() > 0 ? svd.sigma(0) : 0.0;
  Index keep = 0;
  while (keep < svd.sigma.size() && svd.sigma(keep) > 1e-10 * top && top > 0) ++keep;
  if (keep < W0.cols())
    out.warnings.push_back("stage 2: effective rank " + std::to_string(keep) + " below requested " +
                           std::to_string(W0.cols()) + "; trailing factors dropped");
  out.sigma = svd.sigma.head(keep) / std::sqrt(static_cast<double>(n) * static_cast<double>(p));
  const VectorXd root = out.sigma.cwiseSqrt();
  out.W = std::sqrt(static_cast<double>(n)) * svd.U.leftCols(keep) * root.asDiagonal();
  out.Gamma = std::sqrt(static_cast<double>(p)) * svd.V.leftCols(keep) * root.asDiagonal();
  return out;
}

Stage3Result solve_stage3(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                          const Eigen::Ref<const MatrixXd>& Gamma_hat,
                          const Eigen::Ref<const MatrixXd>& F_init,
                          const Eigen::Ref<const MatrixXd>& W_init, double lambda,
                          const ColumnFamilies& fams, const OptimOptions& opts) {
  const Index n = Y.rows();
  const Index p = Y.cols();
  const Index d = X.cols();
  const Index r = Gamma_hat.cols();
  if (!(lambda >= 0)) throw InvalidInput("solve_stage3: lambda must be non-negative");
  if (X.rows() != n || Gamma_hat.rows() != p || F_init.rows() != p || F_init.cols() != d ||
      W_init.rows() != n || W_init.cols() != r)
    throw InvalidInput("solve_stage3: shape mismatch");

  const ColumnSpaceProjector<double> pg(Gamma_hat);
  MatrixXd L(n, d + r), R(p, d + r);
  const MatrixXd C = pg.coefficients(F_init);  // P_Gamma F = Gamma C
  L << X, W_init + X * C.transpose();
  R << F_init - Gamma_hat * C, Gamma_hat;

  AlternatingProblem problem;
  problem.left_free = {d, r};
  problem.right_free = {0, d};
  problem.right_l1 = {0, d};
  problem.after_right = [&pg, d, r](MatrixXd& Lm, MatrixXd& Rm) {
    if (r == 0) return;
    const MatrixXd M = pg.coefficients(Rm.leftCols(d));
    Lm.rightCols(r) += Lm.leftCols(d) * M.transpose();
    Rm.leftCols(d) -= Rm.rightCols(r) * M;
  };
  OptimOptions local = opts;
  local.lambda = lambda;
  Stage3Result out;
  out.info = alternating_max(Y, std::move(L), std::move(R), fams, problem, local);
  out.B = out.info.R.leftCols(d);
  out.Z = out.info.L.rightCols(r);
  return out;
}

MatrixXd refit_latent_factors(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                              const Eigen::Ref<const MatrixXd>& B, const Eigen::Ref<const MatrixXd>& Gamma,
                              const ColumnFamilies& fams, const OptimOptions& opts,
                              const std::optional<MatrixXd>& Z_start) {
  const Index n = Y.rows();
  const Index d = X.cols();
  const Index r = Gamma.cols();
  if (r == 0) return MatrixXd(n, 0);
  MatrixXd L(n, d + r), R(Y.cols(), d + r);
  L << X, (Z_start ? *Z_start : MatrixXd::Zero(n, r));
  R << B, Gamma;
  const auto famv = expand_families(fams, Y.cols());
  for (int k = 0; k < 60 && !matrix_feasible(L * R.transpose(), famv); ++k) L.rightCols(r) *= 0.5;
  AlternatingProblem problem;
  problem.left_free = {d, r};
  OptimOptions local = opts;
  local.lambda = 0.0;
  local.patience = std::min(opts.patience, 3);
  return alternating_max(Y, std::move(L), std::move(R), fams, problem, local).L.rightCols(r);
}

}  // namespace gcate
