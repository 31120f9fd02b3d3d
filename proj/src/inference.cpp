#include "gcate/inference.hpp"

#include "gcate/linalg.hpp"
#include "gcate/parallel.hpp"
#include "gcate/rng.hpp"
#include "gcate/stats.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gcate {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_gram(const MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues().maxCoeff();
  const double lo = es.eigenvalues().minCoeff();
  if (!(hi > 0) || !(lo > 1e-12 * hi))
    throw InvalidInput("weighted Gram matrix S is singular; check the design for collinear or "
                       "constant columns");
}

// min v^T Q v over the box [lo, hi] by cyclic coordinate descent.
VectorXd box_qp(const MatrixXd& Q, const VectorXd& lo, const VectorXd& hi, VectorXd v) {
  const Index d = v.size();
  VectorXd Qv = Q * v;
  for (int sweep = 0; sweep < 100000; ++sweep) {
    double max_change = 0.0;
    for (Index c = 0; c < d; ++c) {
      const double next = std::clamp(v(c) - Qv(c) / Q(c, c), lo(c), hi(c));
      const double change = next - v(c);
      if (change != 0.0) {
        Qv += change * Q.col(c);
        v(c) = next;
        max_change = std::max(max_change, std::abs(change));
      }
    }
    if (max_change <= 1e-15 * (1.0 + v.lpNorm<Eigen::Infinity>())) break;
  }
  return v;
}

// min u^T S u subject to lo <= A u <= hi, by ADMM (operator splitting).
VectorXd admm_qp(const MatrixXd& S, const MatrixXd& A, const VectorXd& lo, const VectorXd& hi,
                 VectorXd u) {
  const double rho = 1.0;
  const double sigma = 1e-8;
  const Index d = S.rows();
  const MatrixXd K = 2.0 * S + sigma * MatrixXd::Identity(d, d) + rho * A.transpose() * A;
  const Eigen::LLT<MatrixXd> llt(K);
  VectorXd z = (A * u).cwiseMax(lo).cwiseMin(hi);
  VectorXd y = VectorXd::Zero(A.rows());
  for (int iter = 0; iter < 50000; ++iter) {
    u = llt.solve(sigma * u + A.transpose() * (rho * z - y));
    const VectorXd Au = A * u;
    const VectorXd z_prev = z;
    z = (Au + y / rho).cwiseMax(lo).cwiseMin(hi);
    y += rho * (Au - z);
    const double primal = (Au - z).lpNorm<Eigen::Infinity>();
    const double dual = rho * (A.transpose() * (z - z_prev)).lpNorm<Eigen::Infinity>();
    if (primal < 1e-11 && dual < 1e-11) break;
  }
  return u;
}

struct ResidualWeights {
  MatrixXd R;      // working residuals (t - mu) / (d mu / d eta)
  MatrixXd Omega;  // weights
  std::vector<bool> finite;
};

ResidualWeights residual_weights(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& Theta,
                                 const ColumnFamilies& fams) {
  const Index n = Y.rows();
  const Index p = Y.cols();
  ResidualWeights rw{MatrixXd(n, p), MatrixXd(n, p), std::vector<bool>(static_cast<std::size_t>(p), true)};
  std::vector<char> ok(static_cast<std::size_t>(p), 1);
  parallel_for(p, [&](std::ptrdiff_t j) {
    const ExponentialFamily fam = fams[j];
    for (Index i = 0; i < n; ++i) {
      const double eta = Theta(i, j);
      if (!std::isfinite(eta) || (fam.is_negbin_canonical() && !(eta < 0))) {
        rw.R(i, j) = 0.0;
        rw.Omega(i, j) = 0.0;
        ok[static_cast<std::size_t>(j)] = 0;
        continue;
      }
      const double t = sufficient_stat(fam, Y(i, j));
      const auto ev = evaluate_predictor(fam, t, eta);
      const double dmu = mean_derivative(fam, eta);
      const double r = (t - ev.mu) / dmu;
      if (!std::isfinite(r) || !std::isfinite(ev.weight)) {
        rw.R(i, j) = 0.0;
        rw.Omega(i, j) = 0.0;
        ok[static_cast<std::size_t>(j)] = 0;
        continue;
      }
      rw.R(i, j) = r;
      rw.Omega(i, j) = ev.weight;
    }
  });
  for (Index j = 0; j < p; ++j) rw.finite[static_cast<std::size_t>(j)] = ok[static_cast<std::size_t>(j)] != 0;
  return rw;
}

MatrixXd weighted_gram(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& w) {
  return X.transpose() * w.asDiagonal() * X / static_cast<double>(X.rows());
}

double lambda_floor_check(double lambda_n) {
  if (!(lambda_n >= 0)) throw InvalidInput("lambda_n must be non-negative");
  return lambda_n;
}

}  // namespace

std::vector<double> default_c2_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 10; ++k) grid.push_back(0.001 * k);
  for (int k = 2; k <= 10; ++k) grid.push_back(0.01 * k);
  for (int k = 2; k <= 10; ++k) grid.push_back(0.1 * k);
  return grid;
}

double default_median_threshold(const ExponentialFamily& fam) {
  return fam.kind == FamilyKind::NegBin ? 0.025 : 0.1;
}

VectorXd solve_projection_u(const Eigen::Ref<const MatrixXd>& S, Index coef_index, double lambda_n,
                            const MatrixXd* X, std::optional<double> tau_n) {
  const Index d = S.rows();
  if (S.cols() != d) throw InvalidInput("solve_projection_u: S must be square");
  if (coef_index < 0 || coef_index >= d) throw InvalidInput("solve_projection_u: coef_index out of range");
  lambda_floor_check(lambda_n);
  check_gram(S);
  const MatrixXd Q = S.ldlt().solve(MatrixXd::Identity(d, d));
  const VectorXd e = VectorXd::Unit(d, coef_index);
  const VectorXd lo = e.array() - lambda_n;
  const VectorXd hi = e.array() + lambda_n;
  const VectorXd v = box_qp(Q, lo, hi, e);
  VectorXd u = Q * v;
  if (!tau_n) return u;
  if (X == nullptr) throw InvalidInput("solve_projection_u: tau_n requires the design matrix");
  if (!(*tau_n > 0)) throw InvalidInput("tau_n must be positive");
  const Index n = X->rows();
  MatrixXd A(d + n, d);
  A << S, *X;
  VectorXd alo(d + n), ahi(d + n);
  alo << lo, VectorXd::Constant(n, -*tau_n);
  ahi << hi, VectorXd::Constant(n, *tau_n);
  u = admm_qp(S, A, alo, ahi, u);
  const VectorXd Au = A * u;
  const double violation = std::max((alo - Au).maxCoeff(), (Au - ahi).maxCoeff());
  if (violation > 1e-6 * (1.0 + *tau_n)) throw InvalidInput("solve_projection_u: tau_n and lambda_n constraints are infeasible");
  return u;
}

VectorXd solve_projection_u(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& omega,
                            Index coef_index, double lambda_n, std::optional<double> tau_n) {
  if (omega.size() != X.rows()) throw InvalidInput("solve_projection_u: weight length mismatch");
  const MatrixXd Xm = X;
  return solve_projection_u(weighted_gram(X, omega), coef_index, lambda_n, &Xm, tau_n);
}

DebiasInputs prepare_debias(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                            const Eigen::Ref<const MatrixXd>& Theta, const Eigen::Ref<const MatrixXd>& B,
                            const Eigen::Ref<const MatrixXd>& Gamma, const ColumnFamilies& fams,
                            Index coef_index, ProjectionRule rule) {
  const Index n = Y.rows();
  const Index p = Y.cols();
  const Index d = X.cols();
  if (X.rows() != n || Theta.rows() != n || Theta.cols() != p || B.rows() != p || B.cols() != d ||
      Gamma.rows() != p)
    throw InvalidInput("prepare_debias: shape mismatch");
  if (coef_index < 0 || coef_index >= d) throw InvalidInput("coefficient index out of range");

  const ResidualWeights rw = residual_weights(Y, Theta, fams);
  MatrixXd E;
  if (rule == ProjectionRule::Unweighted || Gamma.cols() == 0) {
    const ColumnSpaceProjector<double> pg(Gamma);
    E = pg.residual(rw.R.transpose()).transpose();
  } else {
    // Per sample, the weighted least-squares residual of R_i on Gamma with weights Omega_i.
    E.resize(n, p);
    parallel_for(n, [&](std::ptrdiff_t i) {
      const VectorXd w = rw.Omega.row(i).transpose();
      const VectorXd r = rw.R.row(i).transpose();
      MatrixXd G = Gamma.transpose() * w.asDiagonal() * Gamma;
      G.diagonal().array() += 1e-12 * std::max(G.trace(), 1e-300);
      const VectorXd coef = G.ldlt().solve(Gamma.transpose() * w.cwiseProduct(r));
      E.row(i) = (r - Gamma * coef).transpose();
    });
  }
  const VectorXd omega_bar = rw.Omega.rowwise().mean();

  DebiasInputs in;
  in.n = n;
  in.coef_index = coef_index;
  in.b_hat = B.col(coef_index);
  in.S.resize(static_cast<std::size_t>(p));
  in.shared_meat.resize(static_cast<std::size_t>(p));
  in.score.resize(d, p);
  in.shared_S = weighted_gram(X, omega_bar);
  in.shared_score = X.transpose() * (omega_bar.asDiagonal() * E) / static_cast<double>(n);
  in.finite = rw.finite;
  parallel_for(p, [&](std::ptrdiff_t j) {
    const VectorXd w = rw.Omega.col(j);
    in.S[static_cast<std::size_t>(j)] = weighted_gram(X, w);
    in.score.col(j) = X.transpose() * w.cwiseProduct(E.col(j)) / static_cast<double>(n);
    VectorXd ratio(n);
    for (Index i = 0; i < n; ++i) ratio(i) = w(i) > 0 ? omega_bar(i) * omega_bar(i) / w(i) : 0.0;
    in.shared_meat[static_cast<std::size_t>(j)] = weighted_gram(X, ratio);
  });
  return in;
}

void z_statistics(InferenceResult& res) {
  const Index p = res.b_debiased.size();
  res.z.resize(p);
  res.pvalue.resize(p);
  const double root_n = std::sqrt(static_cast<double>(res.n));
  for (Index j = 0; j < p; ++j) {
    const double s = res.sigma_hat(j);
    res.z(j) = s > 0 ? root_n * res.b_debiased(j) / s : kNaN;
    res.pvalue(j) = two_sided_pvalue(res.z(j));
  }
}

InferenceResult finish_debias(const DebiasInputs& in, double lambda_n, WeightMode mode,
                              const Eigen::Ref<const MatrixXd>& X, std::optional<double> tau_n) {
  const Index p = in.b_hat.size();
  const Index d = in.score.rows();
  const MatrixXd Xm = X;
  InferenceResult res;
  res.coef_index = in.coef_index;
  res.lambda_n = lambda_floor_check(lambda_n);
  res.n = in.n;
  res.b_hat = in.b_hat;
  res.b_debiased = VectorXd::Constant(p, kNaN);
  res.sigma_hat = VectorXd::Constant(p, kNaN);
  res.u_hat = MatrixXd::Constant(d, p, kNaN);

  VectorXd shared_u;
  if (mode == WeightMode::Shared)
    shared_u = solve_projection_u(in.shared_S, in.coef_index, lambda_n, &Xm, tau_n);

  std::vector<std::string> errors(static_cast<std::size_t>(p));
  parallel_for(p, [&](std::ptrdiff_t j) {
    const auto js = static_cast<std::size_t>(j);
    if (!in.finite[js]) {
      errors[js] = "non-finite residuals";
      return;
    }
    try {
      VectorXd u;
      double var;
      double correction;
      if (mode == WeightMode::PerGene) {
        u = solve_projection_u(in.S[js], in.coef_index, lambda_n, &Xm, tau_n);
        var = u.dot(in.S[js] * u);
        correction = u.dot(in.score.col(j));
      } else {
        u = shared_u;
        var = u.dot(in.shared_meat[js] * u);
        correction = u.dot(in.shared_score.col(j));
      }
      res.u_hat.col(j) = u;
      res.b_debiased(j) = in.b_hat(j) + correction;
      res.sigma_hat(j) = std::sqrt(std::max(var, 0.0));
    } catch (const std::exception& e) {
      errors[js] = e.what();
    }
  });
  for (Index j = 0; j < p; ++j)
    if (!errors[static_cast<std::size_t>(j)].empty())
      res.warnings.push_back("gene " + std::to_string(j + 1) + ": " + errors[static_cast<std::size_t>(j)]);
  z_statistics(res);
  return res;
}

LambdaSelection select_lambda_n(const DebiasInputs& in, const Eigen::Ref<const MatrixXd>& X,
                                const DebiasConfig& cfg, double median_threshold) {
  if (cfg.c2_grid.empty()) throw InvalidInput("select_lambda_n: empty grid");
  LambdaSelection sel;
  bool found = false;
  for (const double c2 : cfg.c2_grid) {
    const double lambda_n = lambda_n_from_c2(c2, in.n);
    const InferenceResult res = finish_debias(in, lambda_n, cfg.mode, X, cfg.tau_n);
    const double med = median(res.z);
    sel.trace.push_back({c2, lambda_n, med, normalized_mad(res.z)});
    if (std::abs(med) <= median_threshold && (!found || c2 > sel.c2)) {
      found = true;
      sel.c2 = c2;
      sel.lambda_n = lambda_n;
    }
  }
  if (!found) {
    sel.feasible = false;
    sel.c2 = *std::min_element(cfg.c2_grid.begin(), cfg.c2_grid.end());
    sel.lambda_n = lambda_n_from_c2(sel.c2, in.n);
  }
  return sel;
}

VectorXd bh_adjust(const Eigen::Ref<const VectorXd>& pvalues) {
  std::vector<Index> order;
  for (Index j = 0; j < pvalues.size(); ++j)
    if (!std::isnan(pvalues(j))) order.push_back(j);
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return pvalues(a) < pvalues(b); });
  VectorXd q = VectorXd::Constant(pvalues.size(), kNaN);
  const double m = static_cast<double>(order.size());
  double running = 1.0;
  for (std::size_t k = order.size(); k-- > 0;) {
    running = std::min(running, pvalues(order[k]) * m / static_cast<double>(k + 1));
    q(order[k]) = running;
  }
  return q;
}

double bonferroni_cutoff(double alpha, Index p) {
  if (!(alpha > 0 && alpha < 1) || p < 1) throw InvalidInput("bonferroni_cutoff: need 0 < alpha < 1, p >= 1");
  return normal_quantile(1.0 - alpha / (2.0 * static_cast<double>(p)));
}

std::vector<bool> fwer_test(const Eigen::Ref<const VectorXd>& z, double alpha, Index p) {
  const double cut = bonferroni_cutoff(alpha, p);
  std::vector<bool> out(static_cast<std::size_t>(z.size()));
  for (Index j = 0; j < z.size(); ++j) out[static_cast<std::size_t>(j)] = std::abs(z(j)) > cut;
  return out;
}

namespace {

InferenceResult debias_with_config(const DebiasInputs& in, const Eigen::Ref<const MatrixXd>& X,
                                   const ExponentialFamily& fam, const DebiasConfig& cfg,
                                   LambdaSelection* selection) {
  double lambda_n;
  std::vector<std::string> notes;
  if (cfg.c2) {
    lambda_n = lambda_n_from_c2(*cfg.c2, in.n);
  } else {
    const LambdaSelection sel =
        select_lambda_n(in, X, cfg, cfg.median_threshold.value_or(default_median_threshold(fam)));
    lambda_n = sel.lambda_n;
    if (!sel.feasible)
      notes.push_back("no lambda_n on the grid met the median threshold; using the smallest");
    if (selection) *selection = sel;
  }
  InferenceResult res = finish_debias(in, lambda_n, cfg.mode, X, cfg.tau_n);
  res.qvalue = bh_adjust(res.pvalue);
  res.warnings.insert(res.warnings.begin(), notes.begin(), notes.end());
  return res;
}

std::vector<Index> without(Index p, Index skip) {
  std::vector<Index> keep;
  for (Index k = 0; k < p; ++k)
    if (k != skip) keep.push_back(k);
  return keep;
}

MatrixXd select_columns(const Eigen::Ref<const MatrixXd>& M, const std::vector<Index>& cols) {
  MatrixXd out(M.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = M.col(cols[k]);
  return out;
}

MatrixXd select_rows(const Eigen::Ref<const MatrixXd>& M, const std::vector<Index>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), M.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = M.row(rows[k]);
  return out;
}

}  // namespace

InferenceResult run_inference(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& X,
                              const FactorModelFit& fit, const DebiasConfig& cfg,
                              LambdaSelection* selection) {
  const DebiasInputs in =
      prepare_debias(Y, X, fit.Theta_hat, fit.B_hat, fit.Gamma_hat, fit.family, cfg.coef_index, cfg.projection);
  return debias_with_config(in, X, fit.family.base, cfg, selection);
}

InferenceResult run_split_inference(const GlmDataset& data, const FitConfig& fit_cfg,
                                    const DebiasConfig& cfg, const SplitConfig& split,
                                    LambdaSelection* selection) {
  if (!(split.ratio > 0 && split.ratio <= 1)) throw InvalidInput("split ratio must lie in (0, 1]");
  data.validate(fit_cfg.family);
  if (split.ratio == 1.0) {
    const FactorModelFit fit = fit_gcate(data, fit_cfg);
    InferenceResult res = run_inference(data.Y, data.X, fit, cfg, selection);
    res.gene_names = data.gene_names;
    return res;
  }

  const Index n = data.n();
  const Index p = data.p();
  const auto n1 = static_cast<Index>(std::floor(split.ratio * static_cast<double>(n)));
  if (n1 <= data.d() || n - n1 <= data.d())
    throw InvalidInput("split ratio leaves too few samples in one part");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng = make_rng(split.seed, "split");
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Index> infer(perm.begin(), perm.begin() + n1);
  std::vector<Index> estimate(perm.begin() + n1, perm.end());
  std::sort(infer.begin(), infer.end());
  std::sort(estimate.begin(), estimate.end());
  const GlmDataset d1 = data.select_samples(infer);
  const GlmDataset d2 = data.select_samples(estimate);

  const ColumnFamilies fams = resolve_families(d2.Y, d2.X, fit_cfg.family, fit_cfg.phi);
  const FactorModelFit fit2 = fit_gcate(d2.Y, d2.X, fams, fit_cfg);
  const OptimOptions opts = effective_options(fit_cfg);
  const MatrixXd Z1 = refit_latent_factors(d1.Y, d1.X, fit2.B_hat, fit2.Gamma_hat, fams, opts);
  const MatrixXd Theta1 = build_theta(d1.X, fit2.B_hat, Z1, fit2.Gamma_hat);
  DebiasInputs in = prepare_debias(d1.Y, d1.X, Theta1, fit2.B_hat, fit2.Gamma_hat, fams, cfg.coef_index, cfg.projection);

  if (split.strict_leave_one_out && fit2.Gamma_hat.cols() > 0) {
    const ColumnSpaceProjector<double> pg(fit2.Gamma_hat);
    for (Index j = 0; j < p; ++j) {
      const std::vector<Index> keep = without(p, j);
      const MatrixXd Zj = refit_latent_factors(select_columns(d1.Y, keep), d1.X,
                                               select_rows(fit2.B_hat, keep),
                                               select_rows(fit2.Gamma_hat, keep), fams.subset(keep),
                                               opts, Z1);
      const MatrixXd Thetaj = build_theta(d1.X, fit2.B_hat, Zj, fit2.Gamma_hat);
      const DebiasInputs gene =
          prepare_debias(d1.Y, d1.X, Thetaj, fit2.B_hat, fit2.Gamma_hat, fams, cfg.coef_index, cfg.projection);
      in.S[static_cast<std::size_t>(j)] = gene.S[static_cast<std::size_t>(j)];
      in.score.col(j) = gene.score.col(j);
      in.finite[static_cast<std::size_t>(j)] = gene.finite[static_cast<std::size_t>(j)];
    }
  }

  InferenceResult res = debias_with_config(in, d1.X, fit_cfg.family, cfg, selection);
  res.gene_names = data.gene_names;
  return res;
}

}  // namespace gcate
