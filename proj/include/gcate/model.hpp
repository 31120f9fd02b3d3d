#pragma once

// Data containers and likelihood evaluation for the confounded GLM
//   Theta = X B^T + Z Gamma^T.
// Theta here is the linear-predictor matrix: the natural parameter for
// canonical links and xi for the NB log link.

#include "gcate/expfam.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace gcate {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// A family with an optional per-gene auxiliary parameter (the estimated
/// NB dispersions live here, not in the dataset).
struct ColumnFamilies {
  ExponentialFamily base;
  VectorXd aux;  // empty: every gene uses base.aux

  ColumnFamilies() = default;
  ColumnFamilies(ExponentialFamily family) : base(family) {}  // NOLINT: implicit by design of callers
  ColumnFamilies(ExponentialFamily family, VectorXd per_gene)
      : base(family), aux(std::move(per_gene)) {}

  ExponentialFamily operator[](Index j) const {
    return aux.size() == 0 ? base : base.with_aux(aux(j));
  }

  ColumnFamilies subset(const std::vector<Index>& genes) const;
};

struct GlmDataset {
  MatrixXd Y;  // n x p responses
  MatrixXd X;  // n x d covariates
  std::vector<std::string> gene_names;
  std::vector<std::string> covariate_names;
  std::optional<MatrixXd> oracle_Z;

  Index n() const { return Y.rows(); }
  Index p() const { return Y.cols(); }
  Index d() const { return X.cols(); }

  /// Throws InvalidInput on shape, rank, or support violations.
  void validate(const ExponentialFamily& fam) const;

  /// Rows selected by index, in the given order.
  GlmDataset select_samples(const std::vector<Index>& rows) const;
};

/// Fills default gene / covariate names where missing.
void ensure_names(GlmDataset& data);

template <typename DX, typename DB, typename DZ, typename DG>
Matrix<typename DX::Scalar> build_theta(const Eigen::MatrixBase<DX>& X,
                                        const Eigen::MatrixBase<DB>& B,
                                        const Eigen::MatrixBase<DZ>& Z,
                                        const Eigen::MatrixBase<DG>& Gamma) {
  if (X.cols() != B.cols() || Z.cols() != Gamma.cols() || X.rows() != Z.rows() ||
      B.rows() != Gamma.rows())
    throw InvalidInput("build_theta: shape mismatch");
  Matrix<typename DX::Scalar> theta = X * B.transpose();
  if (Z.cols() > 0) theta.noalias() += Z * Gamma.transpose();
  return theta;
}

namespace detail {

inline void check_predictor(const ExponentialFamily& fam, double eta, Index i, Index j) {
  if (!std::isfinite(eta) || (fam.is_negbin_canonical() && !(eta < 0.0)))
    throw DomainError("natural parameter out of domain at (" + std::to_string(i) + ", " +
                      std::to_string(j) + "): " + std::to_string(eta));
}

}  // namespace detail

/// L(Theta) = -(1/n) sum_ij (t_ij theta_ij - A(theta_ij)), base measure excluded.
template <typename DY, typename DT>
typename DT::Scalar neg_log_likelihood(const Eigen::MatrixBase<DY>& Y,
                                       const Eigen::MatrixBase<DT>& Theta,
                                       const ColumnFamilies& fams) {
  using T = typename DT::Scalar;
  if (Y.rows() != Theta.rows() || Y.cols() != Theta.cols())
    throw InvalidInput("neg_log_likelihood: shape mismatch");
  T total = 0;
  for (Index j = 0; j < Theta.cols(); ++j) {
    const ExponentialFamily fam = fams[j];
    for (Index i = 0; i < Theta.rows(); ++i) {
      const T eta = Theta(i, j);
      detail::check_predictor(fam, static_cast<double>(eta), i, j);
      total += predictor_loss(fam, T(sufficient_stat(fam, Y(i, j))), eta);
    }
  }
  return total / T(Theta.rows());
}

/// -2 sum_ij log p(y_ij | theta_ij), base measure included.
double deviance(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& Theta,
                const ColumnFamilies& fams);

/// Cell-wise d loss / d eta, the residual matrix driving every gradient.
template <typename DY, typename DT>
Matrix<typename DT::Scalar> loss_gradient_matrix(const Eigen::MatrixBase<DY>& Y,
                                                 const Eigen::MatrixBase<DT>& Theta,
                                                 const ColumnFamilies& fams) {
  using T = typename DT::Scalar;
  Matrix<T> G(Theta.rows(), Theta.cols());
  for (Index j = 0; j < Theta.cols(); ++j) {
    const ExponentialFamily fam = fams[j];
    for (Index i = 0; i < Theta.rows(); ++i) {
      detail::check_predictor(fam, static_cast<double>(Theta(i, j)), i, j);
      G(i, j) = evaluate_predictor(fam, T(sufficient_stat(fam, Y(i, j))), T(Theta(i, j))).grad;
    }
  }
  return G;
}

template <typename Scalar>
struct LikelihoodGradient {
  Matrix<Scalar> B;      // p x d
  Matrix<Scalar> Z;      // n x r
  Matrix<Scalar> Gamma;  // p x r
};

/// Analytic gradient of L(X B^T + Z Gamma^T) with respect to B, Z, Gamma.
template <typename DY, typename DX, typename DB, typename DZ, typename DG>
LikelihoodGradient<typename DX::Scalar> likelihood_gradient(
    const Eigen::MatrixBase<DY>& Y, const Eigen::MatrixBase<DX>& X,
    const Eigen::MatrixBase<DB>& B, const Eigen::MatrixBase<DZ>& Z,
    const Eigen::MatrixBase<DG>& Gamma, const ColumnFamilies& fams) {
  using T = typename DX::Scalar;
  const Matrix<T> theta = build_theta(X, B, Z, Gamma);
  const Matrix<T> G = loss_gradient_matrix(Y, theta, fams) / T(X.rows());
  return {G.transpose() * X, G * Gamma, G.transpose() * Z};
}

struct FitDiagnostics {
  int stage1_iterations = 0;
  int stage3_iterations = 0;
  double stage1_objective = 0.0;
  double stage3_objective = 0.0;
  bool stage1_converged = false;
  bool stage3_converged = false;
  std::vector<double> stage1_trace;
  std::vector<double> stage3_trace;
  std::vector<std::string> warnings;
};

struct FactorModelFit {
  ColumnFamilies family;
  int r = 0;
  MatrixXd F_hat;       // p x d
  MatrixXd W0_hat;      // n x r
  MatrixXd Gamma0_hat;  // p x r
  MatrixXd W_hat;       // n x r
  MatrixXd Gamma_hat;   // p x r
  MatrixXd B_hat;       // p x d
  MatrixXd Z_hat;       // n x r
  MatrixXd Theta_hat;   // n x p
  double lambda = 0.0;
  FitDiagnostics diagnostics;
};

struct InferenceResult {
  std::vector<std::string> gene_names;
  Index coef_index = 0;  // zero-based column of X under test
  double lambda_n = 0.0;
  Index n = 0;
  VectorXd b_hat;
  VectorXd b_debiased;
  VectorXd sigma_hat;
  VectorXd z;
  VectorXd pvalue;
  VectorXd qvalue;
  MatrixXd u_hat;  // d x p (one column per gene; identical columns in shared mode)
  std::vector<std::string> warnings;

  Index p() const { return z.size(); }
  /// Standard error of the debiased coefficient, sigma / sqrt(n).
  VectorXd standard_error() const;
};

}  // namespace gcate
