#include "gcate/model.hpp"

namespace gcate {

ColumnFamilies ColumnFamilies::subset(const std::vector<Index>& genes) const {
  if (aux.size() == 0) return *this;
  VectorXd sub(static_cast<Index>(genes.size()));
  for (std::size_t k = 0; k < genes.size(); ++k) sub(static_cast<Index>(k)) = aux(genes[k]);
  return {base, std::move(sub)};
}

void GlmDataset::validate(const ExponentialFamily& fam) const {
  fam.validate();
  if (n() < 2) throw InvalidInput("dataset needs at least two samples");
  if (p() < 1) throw InvalidInput("dataset needs at least one response column");
  if (d() < 1) throw InvalidInput("design matrix needs at least one column");
  if (X.rows() != n())
    throw InvalidInput("design has " + std::to_string(X.rows()) + " rows but counts have " +
                       std::to_string(n()));
  if (!X.allFinite()) throw InvalidInput("design matrix contains non-finite values");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
  if (qr.rank() < d()) throw InvalidInput("design matrix is not of full column rank");
  for (Index j = 0; j < p(); ++j)
    for (Index i = 0; i < n(); ++i)
      if (!valid_response(fam, Y(i, j)))
        throw InvalidInput("response (" + std::to_string(i) + ", " + std::to_string(j) +
                           ") = " + std::to_string(Y(i, j)) + " is invalid for family " +
                           std::string(to_string(fam.kind)));
  if (!gene_names.empty() && static_cast<Index>(gene_names.size()) != p())
    throw InvalidInput("gene name count does not match response columns");
  if (oracle_Z && oracle_Z->rows() != n())
    throw InvalidInput("oracle confounders have the wrong number of rows");
}

GlmDataset GlmDataset::select_samples(const std::vector<Index>& rows) const {
  GlmDataset out;
  const auto m = static_cast<Index>(rows.size());
  out.Y.resize(m, p());
  out.X.resize(m, d());
  if (oracle_Z) out.oracle_Z = MatrixXd(m, oracle_Z->cols());
  for (Index k = 0; k < m; ++k) {
    out.Y.row(k) = Y.row(rows[static_cast<std::size_t>(k)]);
    out.X.row(k) = X.row(rows[static_cast<std::size_t>(k)]);
    if (oracle_Z) out.oracle_Z->row(k) = oracle_Z->row(rows[static_cast<std::size_t>(k)]);
  }
  out.gene_names = gene_names;
  out.covariate_names = covariate_names;
  return out;
}

void ensure_names(GlmDataset& data) {
  if (data.gene_names.empty())
    for (Index j = 0; j < data.p(); ++j) data.gene_names.push_back("gene" + std::to_string(j + 1));
  if (data.covariate_names.empty())
    for (Index k = 0; k < data.d(); ++k) data.covariate_names.push_back("x" + std::to_string(k + 1));
}

double deviance(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& Theta,
                const ColumnFamilies& fams) {
  if (Y.rows() != Theta.rows() || Y.cols() != Theta.cols())
    throw InvalidInput("deviance: shape mismatch");
  double total = 0.0;
  for (Index j = 0; j < Theta.cols(); ++j) {
    const ExponentialFamily fam = fams[j];
    for (Index i = 0; i < Theta.rows(); ++i) {
      const double eta = Theta(i, j);
      detail::check_predictor(fam, eta, i, j);
      const double y = Y(i, j);
      total += log_base_measure(fam, y) - predictor_loss(fam, sufficient_stat(fam, y), eta);
    }
  }
  return -2.0 * total;
}

VectorXd InferenceResult::standard_error() const {
  return sigma_hat / std::sqrt(static_cast<double>(n));
}

}  // namespace gcate
