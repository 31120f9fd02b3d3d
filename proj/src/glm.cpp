#include "gcate/optimize.hpp"
#include "gcate/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>

namespace gcate {

namespace {

bool feasible(const ExponentialFamily& fam, const VectorXd& eta) {
  const NaturalDomain dom = fam.predictor_domain();
  for (Index i = 0; i < eta.size(); ++i)
    if (!std::isfinite(eta(i)) || !dom.contains(eta(i))) return false;
  return true;
}

double glm_objective(const ExponentialFamily& fam, const VectorXd& t, const VectorXd& eta,
                     const VectorXd& f, double ridge) {
  double total = 0.0;
  for (Index i = 0; i < t.size(); ++i) total += predictor_loss(fam, t(i), eta(i));
  return total / static_cast<double>(t.size()) + 0.5 * ridge * f.squaredNorm();
}

double condition_number(const MatrixXd& H) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(H, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
}

}  // namespace

GlmFit fit_glm(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
               const ExponentialFamily& fam, double ridge, int max_iters) {
  const Index n = X.rows();
  const Index d = X.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  VectorXd t(n), eta0(n);
  const NaturalDomain dom = fam.predictor_domain();
  for (Index i = 0; i < n; ++i) {
    t(i) = sufficient_stat(fam, y(i));
    eta0(i) = std::clamp(initial_predictor(fam, y(i)), dom.lower, dom.upper);
  }

  GlmFit fit;
  fit.ridge_used = ridge;
  VectorXd f = X.colPivHouseholderQr().solve(eta0);
  VectorXd eta = X * f;
  for (int k = 0; k < 60 && !feasible(fam, eta); ++k) {
    f *= 0.5;
    eta = X * f;
  }
  if (!feasible(fam, eta)) {
    fit.coef = VectorXd::Zero(d);
    fit.information = MatrixXd::Zero(d, d);
    return fit;
  }

  VectorXd grad(n), weight(n);
  auto evaluate = [&](const VectorXd& e) {
    for (Index i = 0; i < n; ++i) {
      const auto ev = evaluate_predictor(fam, t(i), e(i));
      grad(i) = ev.grad;
      weight(i) = ev.weight;
    }
  };

  double obj = glm_objective(fam, t, eta, f, fit.ridge_used);
  for (int iter = 0; iter < max_iters; ++iter) {
    evaluate(eta);
    const MatrixXd info = X.transpose() * weight.asDiagonal() * X;
    MatrixXd H = inv_n * info;
    if (iter == 0 && fit.ridge_used == 0.0 && condition_number(H) > 1e8) fit.ridge_used = kAutoRidge;
    H.diagonal().array() += fit.ridge_used;
    const VectorXd g = inv_n * (X.transpose() * grad) + fit.ridge_used * f;
    const Eigen::LDLT<MatrixXd> ldlt(H);
    VectorXd delta = -ldlt.solve(g);
    double slope = g.dot(delta);
    if (ldlt.info() != Eigen::Success || !delta.allFinite() || !(slope < 0)) {
      delta = -g;
      slope = -g.squaredNorm();
    }
    fit.iterations = iter + 1;
    if (-slope <= 1e-20 * std::max(1.0, std::abs(obj))) {
      fit.converged = true;
      break;
    }

    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls, step *= 0.5) {
      const VectorXd f_new = f + step * delta;
      const VectorXd eta_new = X * f_new;
      if (!feasible(fam, eta_new)) continue;
      const double obj_new = glm_objective(fam, t, eta_new, f_new, fit.ridge_used);
      if (obj_new <= obj + 1e-4 * step * slope) {
        const double change = (step * delta).lpNorm<Eigen::Infinity>();
        f = f_new;
        eta = eta_new;
        obj = obj_new;
        accepted = true;
        if (change <= 1e-10 * (1.0 + f.lpNorm<Eigen::Infinity>())) fit.converged = true;
        break;
      }
    }
    if (!accepted) {
      fit.converged = -slope <= 1e-12 * std::max(1.0, std::abs(obj));
      break;
    }
    if (fit.converged) break;
  }

  evaluate(eta);
  fit.coef = f;
  fit.information = X.transpose() * weight.asDiagonal() * X;
  return fit;
}

MarginalGlmFit fit_marginal_glm(const Eigen::Ref<const MatrixXd>& X,
                                const Eigen::Ref<const MatrixXd>& Y, const ColumnFamilies& fams,
                                double ridge) {
  const Index p = Y.cols();
  if (X.rows() != Y.rows()) throw InvalidInput("fit_marginal_glm: row mismatch between X and Y");
  MarginalGlmFit out;
  out.F.resize(p, X.cols());
  std::vector<char> ok(static_cast<std::size_t>(p), 0);
  parallel_for(p, [&](std::ptrdiff_t j) {
    const GlmFit fit = fit_glm(X, Y.col(j), fams[j], ridge);
    const bool usable = fit.coef.allFinite();
    ok[static_cast<std::size_t>(j)] = fit.converged && usable;
    if (usable) out.F.row(j) = fit.coef.transpose();
    else out.F.row(j).setZero();
  });
  out.converged.assign(ok.begin(), ok.end());
  for (Index j = 0; j < p; ++j)
    if (!ok[static_cast<std::size_t>(j)])
      out.warnings.push_back("marginal GLM for gene " + std::to_string(j + 1) +
                             " did not converge");
  return out;
}

}  // namespace gcate
