#pragma once

#include "gcate/model.hpp"

#include <Eigen/Dense>

namespace gcate {

/// Orthogonal projection onto the column space of a tall matrix A
/// (rank-revealing, so a zero or deficient A projects onto its true span).
template <typename Scalar = double>
class ColumnSpaceProjector {
 public:
  ColumnSpaceProjector() = default;

  template <typename Derived>
  explicit ColumnSpaceProjector(const Eigen::MatrixBase<Derived>& A) : cols_(A.cols()) {
    if (A.cols() > 0 && A.cwiseAbs().maxCoeff() > Scalar(0)) {
      qr_.compute(A.eval());
      q_ = qr_.householderQ() * Matrix<Scalar>::Identity(A.rows(), qr_.rank());
    } else {
      q_.resize(A.rows(), 0);
    }
  }

  Index dim() const { return q_.cols(); }
  const Matrix<Scalar>& basis() const { return q_; }

  /// P_A M
  template <typename Derived>
  Matrix<Scalar> project(const Eigen::MatrixBase<Derived>& M) const {
    if (q_.cols() == 0) return Matrix<Scalar>::Zero(M.rows(), M.cols());
    return q_ * (q_.transpose() * M);
  }

  /// P_A^perp M
  template <typename Derived>
  Matrix<Scalar> residual(const Eigen::MatrixBase<Derived>& M) const {
    if (q_.cols() == 0) return M;
    return M - q_ * (q_.transpose() * M);
  }

  /// C with P_A M = A C, i.e. the least-squares coefficients (A^T A)^{-1} A^T M.
  template <typename Derived>
  Matrix<Scalar> coefficients(const Eigen::MatrixBase<Derived>& M) const {
    if (q_.cols() == 0) return Matrix<Scalar>::Zero(cols_, M.cols());
    return qr_.solve(M.eval());
  }

 private:
  Index cols_ = 0;
  Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr_;
  Matrix<Scalar> q_;
};

/// Dense p x p projection matrix onto the column space of A.
template <typename Derived>
Matrix<typename Derived::Scalar> projection_matrix(const Eigen::MatrixBase<Derived>& A) {
  using T = typename Derived::Scalar;
  if (A.cols() == 0) return Matrix<T>::Zero(A.rows(), A.rows());
  const ColumnSpaceProjector<T> proj(A);
  return proj.basis() * proj.basis().transpose();
}

struct CondensedSvd {
  MatrixXd U;       // n x k
  VectorXd sigma;   // k, descending
  MatrixXd V;       // p x k
};

/// Thin SVD of L R^T (n x p) without forming the product, via QR of both
/// factors and an SVD of the small k x k core.
CondensedSvd product_svd(const Eigen::Ref<const MatrixXd>& L, const Eigen::Ref<const MatrixXd>& R);

/// Leading r singular triplets of a dense matrix.
CondensedSvd truncated_svd(const Eigen::Ref<const MatrixXd>& M, Index r);

/// Operator (spectral) norm of a symmetric matrix.
double symmetric_operator_norm(const Eigen::Ref<const MatrixXd>& S);

}  // namespace gcate
