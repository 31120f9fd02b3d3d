#pragma once

// Synthetic scenarios, evaluation metrics, GLM baselines, and a replicate runner.

#include "gcate/inference.hpp"
#include "gcate/rng.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gcate {

enum class ScenarioKind { PoissonBulk, NegBinSingleCell };

struct SimulationScenario {
  ScenarioKind kind = ScenarioKind::PoissonBulk;
  Index n = 250;
  Index p = 1000;
  Index r = 2;
  std::uint64_t seed = 0;
  double signal_prob = 0.05;
  double signal_magnitude = 0.2;
  double intercept_coef = 0.5;
  std::optional<double> d_scale;  // default n^{-3/2}
  std::optional<double> w_scale;  // default (n/2)^{1/2}
  double confounding = 1.0;       // multiplies Gamma; 0 removes the latent factors
  // NegBin single-cell scenario
  double nb_log_mean = -0.5;      // mean of the gene log base expression
  double nb_log_mean_sd = 1.5;
  double nb_library_sd = 0.3;     // sd of log size factors
  double nb_batch_sd = 0.5;       // sd of per-gene batch effects
  double nb_batch_tilt = 0.3;     // dependence of batch membership on the group
  Index nb_batches = 4;
  Index nb_min_expressed = 10;

  static SimulationScenario negbin_defaults(Index n, Index p);
  void validate() const;
};

struct SimulatedData {
  GlmDataset data;   // X, Y, oracle_Z
  MatrixXd B;        // p x d
  MatrixXd Gamma;    // p x r
  std::vector<bool> is_signal;       // b_j1 != 0
  std::vector<bool> low_expression;  // expressed in fewer than nb_min_expressed samples
  VectorXd phi;                      // true NB phi (empty for Poisson)
  Index coef_index = 0;
};

/// Haar-distributed p x r matrix with orthonormal columns.
MatrixXd random_orthonormal(Index p, Index r, Rng& rng);

SimulatedData gen_poisson_scenario(const SimulationScenario& cfg);
SimulatedData gen_negbin_scenario(const SimulationScenario& cfg);
SimulatedData generate(const SimulationScenario& cfg);

/// Drops the flagged low-expression genes from a simulated dataset.
SimulatedData drop_low_expression(const SimulatedData& sim);

struct MetricsReport {
  double type1 = 0.0;
  double fdp = 0.0;
  double power = 0.0;
  double precision = 0.0;
  double alpha = 0.05;
  double fdr_cut = 0.2;
  Index n_discoveries = 0;
};

/// type1 and power from p < alpha; fdp and precision from q < fdr_cut.
MetricsReport evaluate(const Eigen::Ref<const VectorXd>& pvalues, const Eigen::Ref<const VectorXd>& qvalues,
                       const std::vector<bool>& truth_mask, double alpha, double fdr_cut);

struct MethodResult {
  std::string method;
  VectorXd z;
  VectorXd pvalue;
  VectorXd qvalue;
};

/// Per-gene GLM Wald test of one coefficient.
MethodResult glm_wald_test(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& design,
                           const ColumnFamilies& fams, Index coef_index, const std::string& name);

/// glm-naive on X and, when requested, glm-oracle on [X, Z].
std::vector<MethodResult> run_baselines(const GlmDataset& data, const ExponentialFamily& family,
                                        std::optional<double> phi, Index coef_index, bool oracle);

struct SimulationRequest {
  SimulationScenario scenario;
  int replicates = 20;
  double alpha = 0.05;
  double fdr = 0.2;
  std::vector<std::string> methods = {"gcate", "naive", "oracle"};
  FitConfig fit;              // family and rank taken from the scenario unless select_rank
  DebiasConfig debias;
  SplitConfig split;
  bool select_rank = false;   // JIC over [1, r_max]
  int r_max = 6;
};

struct MethodMetrics {
  std::string method;
  std::vector<MetricsReport> per_replicate;
  MetricsReport median;
};

struct SimulationSummary {
  std::vector<MethodMetrics> methods;
  std::vector<int> selected_ranks;
  std::vector<std::string> warnings;
};

/// Median of each metric across replicates (NaN entries ignored).
MetricsReport median_report(const std::vector<MetricsReport>& reports);

SimulationSummary run_simulation(const SimulationRequest& req);

}  // namespace gcate
