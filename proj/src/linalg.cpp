#include "gcate/linalg.hpp"

#include <Eigen/SVD>

namespace gcate {

namespace {

MatrixXd thin_q(const Eigen::HouseholderQR<MatrixXd>& qr, Index rows, Index cols) {
  return qr.householderQ() * MatrixXd::Identity(rows, cols);
}

}  // namespace

CondensedSvd product_svd(const Eigen::Ref<const MatrixXd>& L, const Eigen::Ref<const MatrixXd>& R) {
  if (L.cols() != R.cols()) throw InvalidInput("product_svd: inner dimension mismatch");
  const Index k = L.cols();
  if (k == 0) return {MatrixXd(L.rows(), 0), VectorXd(0), MatrixXd(R.rows(), 0)};
  if (k > L.rows() || k > R.rows()) throw InvalidInput("product_svd: rank exceeds dimensions");
  const Eigen::HouseholderQR<MatrixXd> ql(L);
  const Eigen::HouseholderQR<MatrixXd> qrr(R);
  const MatrixXd rl = ql.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const MatrixXd rr = qrr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const MatrixXd core = rl * rr.transpose();
  Eigen::JacobiSVD<MatrixXd> svd(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return {thin_q(ql, L.rows(), k) * svd.matrixU(), svd.singularValues(),
          thin_q(qrr, R.rows(), k) * svd.matrixV()};
}

CondensedSvd truncated_svd(const Eigen::Ref<const MatrixXd>& M, Index r) {
  if (r > std::min(M.rows(), M.cols())) throw InvalidInput("truncated_svd: rank exceeds dimensions");
  Eigen::BDCSVD<MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU().leftCols(r), svd.singularValues().head(r), svd.matrixV().leftCols(r)};
}

double symmetric_operator_norm(const Eigen::Ref<const MatrixXd>& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace gcate
