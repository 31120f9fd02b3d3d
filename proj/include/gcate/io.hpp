#pragma once

// File formats: CSV / MatrixMarket inputs, the fit JSON artifact, results
// TSV, and the JSON reports of select-rank, test traces and simulate.

#include "gcate/rank_select.hpp"
#include "gcate/simulate.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace gcate {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedMatrix {
  MatrixXd values;
  std::vector<std::string> names;  // one per column
};

/// CSV with a header of column names and one numeric row per sample.
NamedMatrix read_csv_matrix(const std::string& path);
void write_csv_matrix(const std::string& path, const Eigen::Ref<const MatrixXd>& M,
                      const std::vector<std::string>& names);

/// Counts from CSV, or MatrixMarket coordinate (rows = samples, columns = genes).
NamedMatrix read_counts(const std::string& path);
void write_matrix_market(const std::string& path, const Eigen::Ref<const MatrixXd>& M);

/// Loads counts and design and checks they agree on the sample count.
GlmDataset read_dataset(const std::string& counts_path, const std::string& design_path);

/// Inputs and options recorded with a fit so `test` can reload the data.
struct FitRecord {
  FactorModelFit fit;
  std::vector<std::string> gene_names;
  std::vector<std::string> covariate_names;
  std::string counts_path;
  std::string design_path;
  std::string nb_link = "log";
  std::optional<double> phi;
  std::optional<double> lambda;
  std::optional<double> c_prime;
  int max_iters = 200;
  double tol = 1e-4;
  std::uint64_t seed = 0;
};

inline constexpr int kFitSchema = 1;

void write_fit_json(const std::string& path, const FitRecord& rec);
FitRecord read_fit_json(const std::string& path);

/// TSV: gene, beta_hat, beta_debiased, se, z, pvalue, qvalue, reject_alpha, reject_fdr.
void write_results(const std::string& path, const InferenceResult& res, double alpha, double fdr);

struct ResultsTable {
  std::vector<std::string> genes;
  MatrixXd values;  // beta_hat, beta_debiased, se, z, pvalue, qvalue
  std::vector<bool> reject_alpha;
  std::vector<bool> reject_fdr;
};
ResultsTable read_results(const std::string& path);

void write_jic_json(const std::string& path, const JicTrace& trace);

/// lambda_n scree plus a histogram of the z statistics.
void write_test_trace_json(const std::string& path, const InferenceResult& res,
                           const LambdaSelection* selection, double alpha);

void write_metrics_json(const std::string& path, const SimulationRequest& req,
                        const SimulationSummary& summary);

}  // namespace gcate
