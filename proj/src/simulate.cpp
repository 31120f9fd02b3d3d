#include "gcate/simulate.hpp"

#include "gcate/parallel.hpp"
#include "gcate/rank_select.hpp"
#include "gcate/stats.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace gcate {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

MatrixXd gaussian_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd M(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) M(i, j) = normal(rng);
  return M;
}

// Keeps the singular vectors of G and sets its singular values to
// a (2 - (k - 1) / (r - 1)), k = 1, 2, ...
MatrixXd with_singular_values(const MatrixXd& G, double a, Index r) {
  Eigen::JacobiSVD<MatrixXd> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Index k = svd.singularValues().size();
  VectorXd s(k);
  for (Index i = 0; i < k; ++i)
    s(i) = a * (2.0 - static_cast<double>(i) / static_cast<double>(r - 1));
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

double nan_median(std::vector<double> xs) {
  const Eigen::Map<VectorXd> v(xs.data(), static_cast<Index>(xs.size()));
  return median(v);
}

}  // namespace

SimulationScenario SimulationScenario::negbin_defaults(Index n, Index p) {
  SimulationScenario cfg;
  cfg.kind = ScenarioKind::NegBinSingleCell;
  cfg.n = n;
  cfg.p = p;
  cfg.r = 3;
  cfg.signal_magnitude = 0.5;
  return cfg;
}

void SimulationScenario::validate() const {
  if (n < 4 || p < 1) throw InvalidInput("scenario needs n >= 4 and p >= 1");
  if (kind == ScenarioKind::PoissonBulk && (r < 2 || r > std::min(n, p)))
    throw InvalidInput("the Poisson scenario needs 2 <= r <= min(n, p)");
  if (!(signal_prob >= 0 && signal_prob <= 1)) throw InvalidInput("signal_prob must lie in [0, 1]");
  if (!(confounding >= 0)) throw InvalidInput("confounding must be non-negative");
  if (kind == ScenarioKind::NegBinSingleCell) {
    if (nb_batches < 2) throw InvalidInput("the NegBin scenario needs at least two batches");
    if (!(nb_batch_tilt >= 0 && nb_batch_tilt < 1)) throw InvalidInput("nb_batch_tilt must lie in [0, 1)");
  }
}

MatrixXd random_orthonormal(Index p, Index r, Rng& rng) {
  const MatrixXd G = gaussian_matrix(p, r, rng);
  const Eigen::HouseholderQR<MatrixXd> qr(G);
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(p, r);
  const MatrixXd R = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  for (Index k = 0; k < r; ++k)
    if (R(k, k) < 0) Q.col(k) *= -1.0;
  return Q;
}

SimulatedData gen_poisson_scenario(const SimulationScenario& cfg) {
  cfg.validate();
  const Index n = cfg.n, p = cfg.p, r = cfg.r, d = 2;
  Rng rng = make_rng(cfg.seed, "generator");
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution is_signal(cfg.signal_prob);

  SimulatedData sim;
  MatrixXd X(n, d);
  for (Index i = 0; i < n; ++i) X(i, 0) = coin(rng) ? 1.0 : -1.0;
  X.col(1).setOnes();

  const double dn = static_cast<double>(n);
  const MatrixXd D = with_singular_values(gaussian_matrix(r, d, rng),
                                          cfg.d_scale.value_or(std::pow(dn, -1.5)), r);
  const MatrixXd W = with_singular_values(gaussian_matrix(n, r, rng),
                                          cfg.w_scale.value_or(std::sqrt(dn / 2.0)), r);
  const MatrixXd Z = X * D.transpose() + W;

  VectorXd lam(r);
  for (Index k = 0; k < r; ++k) lam(k) = 2.0 - static_cast<double>(k) / static_cast<double>(r - 1);
  sim.Gamma = cfg.confounding * std::sqrt(static_cast<double>(p) / 2.0) *
              random_orthonormal(p, r, rng) * lam.asDiagonal();

  sim.B.resize(p, d);
  sim.is_signal.resize(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) {
    const bool signal = is_signal(rng);
    const bool positive = coin(rng);
    sim.is_signal[static_cast<std::size_t>(j)] = signal;
    sim.B(j, 0) = signal ? (positive ? cfg.signal_magnitude : -cfg.signal_magnitude) : 0.0;
    sim.B(j, 1) = cfg.intercept_coef;
  }

  const MatrixXd Theta = build_theta(X, sim.B, Z, sim.Gamma);
  MatrixXd Y(n, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < n; ++i) {
      std::poisson_distribution<long long> pois(std::exp(Theta(i, j)));
      Y(i, j) = static_cast<double>(pois(rng));
    }

  sim.data.X = std::move(X);
  sim.data.Y = std::move(Y);
  sim.data.oracle_Z = Z;
  sim.low_expression.assign(static_cast<std::size_t>(p), false);
  ensure_names(sim.data);
  return sim;
}

SimulatedData gen_negbin_scenario(const SimulationScenario& cfg) {
  cfg.validate();
  const Index n = cfg.n, p = cfg.p, nb = cfg.nb_batches;
  Rng rng = make_rng(cfg.seed, "generator");
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution is_signal(cfg.signal_prob);
  std::normal_distribution<double> normal(0.0, 1.0);

  VectorXd group(n), log_size(n);
  std::vector<Index> batch(static_cast<std::size_t>(n));
  const double centre = 0.5 * static_cast<double>(nb - 1);
  for (Index i = 0; i < n; ++i) {
    group(i) = coin(rng) ? 1.0 : -1.0;
    std::vector<double> w(static_cast<std::size_t>(nb));
    for (Index k = 0; k < nb; ++k)
      w[static_cast<std::size_t>(k)] =
          1.0 + cfg.nb_batch_tilt * group(i) * (centre - static_cast<double>(k)) / centre;
    std::discrete_distribution<Index> pick(w.begin(), w.end());
    batch[static_cast<std::size_t>(i)] = pick(rng);
    log_size(i) = cfg.nb_library_sd * normal(rng);
  }

  SimulatedData sim;
  sim.Gamma.resize(p, nb);
  sim.B = MatrixXd::Zero(p, 3);
  sim.is_signal.resize(static_cast<std::size_t>(p));
  sim.phi.resize(p);
  VectorXd base(p);
  for (Index j = 0; j < p; ++j) {
    base(j) = cfg.nb_log_mean + cfg.nb_log_mean_sd * normal(rng);
    for (Index k = 0; k < nb; ++k) sim.Gamma(j, k) = cfg.confounding * cfg.nb_batch_sd * normal(rng);
    const bool signal = is_signal(rng);
    const bool positive = coin(rng);
    sim.is_signal[static_cast<std::size_t>(j)] = signal;
    sim.B(j, 0) = signal ? (positive ? cfg.signal_magnitude : -cfg.signal_magnitude) : 0.0;
    sim.B(j, 1) = base(j);
  }

  MatrixXd Y(n, p);
  for (Index j = 0; j < p; ++j) {
    VectorXd mu(n);
    for (Index i = 0; i < n; ++i)
      mu(i) = std::exp(log_size(i) + base(j) + sim.B(j, 0) * group(i) +
                       sim.Gamma(j, batch[static_cast<std::size_t>(i)]));
    // Lower-expressed genes are more dispersed.
    const double alpha = std::clamp(
        (0.1 + 1.0 / std::sqrt(mu.mean())) * std::exp(0.25 * normal(rng)), kMinAlpha, kMaxAlpha);
    const double phi = 1.0 / alpha;
    sim.phi(j) = phi;
    for (Index i = 0; i < n; ++i) {
      std::gamma_distribution<double> gamma(phi, mu(i) / phi);
      std::poisson_distribution<long long> pois(gamma(rng));
      Y(i, j) = static_cast<double>(pois(rng));
    }
  }

  MatrixXd X(n, 3);
  X.col(0) = group;
  X.col(1).setOnes();
  for (Index i = 0; i < n; ++i) X(i, 2) = std::log(std::max(Y.row(i).sum(), 1.0));
  X.col(2).array() -= X.col(2).mean();

  MatrixXd Z(n, nb - 1);
  for (Index i = 0; i < n; ++i)
    for (Index k = 1; k < nb; ++k) Z(i, k - 1) = batch[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0;
  Z.rowwise() -= Z.colwise().mean();
  // Batch effects relative to batch 0, matching the dummy coding of Z.
  const MatrixXd batch_effects = sim.Gamma;
  sim.Gamma = batch_effects.rightCols(nb - 1).colwise() - batch_effects.col(0);

  sim.low_expression.resize(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j)
    sim.low_expression[static_cast<std::size_t>(j)] = (Y.col(j).array() > 0).count() < cfg.nb_min_expressed;

  sim.data.X = std::move(X);
  sim.data.Y = std::move(Y);
  sim.data.oracle_Z = std::move(Z);
  ensure_names(sim.data);
  return sim;
}

SimulatedData generate(const SimulationScenario& cfg) {
  return cfg.kind == ScenarioKind::PoissonBulk ? gen_poisson_scenario(cfg) : gen_negbin_scenario(cfg);
}

SimulatedData drop_low_expression(const SimulatedData& sim) {
  std::vector<Index> keep;
  for (Index j = 0; j < sim.data.p(); ++j)
    if (!sim.low_expression[static_cast<std::size_t>(j)]) keep.push_back(j);
  SimulatedData out;
  const auto m = static_cast<Index>(keep.size());
  out.data.X = sim.data.X;
  out.data.oracle_Z = sim.data.oracle_Z;
  out.data.covariate_names = sim.data.covariate_names;
  out.data.Y.resize(sim.data.n(), m);
  out.B.resize(m, sim.B.cols());
  out.Gamma.resize(m, sim.Gamma.cols());
  if (sim.phi.size() > 0) out.phi.resize(m);
  for (Index k = 0; k < m; ++k) {
    const Index j = keep[static_cast<std::size_t>(k)];
    out.data.Y.col(k) = sim.data.Y.col(j);
    out.B.row(k) = sim.B.row(j);
    out.Gamma.row(k) = sim.Gamma.row(j);
    if (sim.phi.size() > 0) out.phi(k) = sim.phi(j);
    out.data.gene_names.push_back(sim.data.gene_names[static_cast<std::size_t>(j)]);
    out.is_signal.push_back(sim.is_signal[static_cast<std::size_t>(j)]);
    out.low_expression.push_back(false);
  }
  out.coef_index = sim.coef_index;
  return out;
}

MetricsReport evaluate(const Eigen::Ref<const VectorXd>& pvalues, const Eigen::Ref<const VectorXd>& qvalues,
                       const std::vector<bool>& truth_mask, double alpha, double fdr_cut) {
  const Index p = pvalues.size();
  if (qvalues.size() != p || static_cast<Index>(truth_mask.size()) != p)
    throw InvalidInput("evaluate: arrays are not aligned");
  Index nulls = 0, signals = 0, null_hits = 0, signal_hits = 0, discoveries = 0, false_discoveries = 0;
  for (Index j = 0; j < p; ++j) {
    const bool signal = truth_mask[static_cast<std::size_t>(j)];
    const bool hit = pvalues(j) < alpha;
    const bool discovered = qvalues(j) < fdr_cut;
    (signal ? signals : nulls) += 1;
    if (hit) (signal ? signal_hits : null_hits) += 1;
    if (discovered) {
      ++discoveries;
      if (!signal) ++false_discoveries;
    }
  }
  MetricsReport m;
  m.alpha = alpha;
  m.fdr_cut = fdr_cut;
  m.n_discoveries = discoveries;
  m.type1 = nulls > 0 ? static_cast<double>(null_hits) / static_cast<double>(nulls) : kNaN;
  m.power = signals > 0 ? static_cast<double>(signal_hits) / static_cast<double>(signals) : kNaN;
  m.fdp = static_cast<double>(false_discoveries) / static_cast<double>(std::max<Index>(1, discoveries));
  m.precision = 1.0 - m.fdp;
  return m;
}

MethodResult glm_wald_test(const Eigen::Ref<const MatrixXd>& Y, const Eigen::Ref<const MatrixXd>& design,
                           const ColumnFamilies& fams, Index coef_index, const std::string& name) {
  const Index p = Y.cols();
  MethodResult res{name, VectorXd::Constant(p, kNaN), VectorXd::Constant(p, kNaN), VectorXd()};
  parallel_for(p, [&](std::ptrdiff_t j) {
    const GlmFit fit = fit_glm(design, Y.col(j), fams[j], 0.0);
    if (!fit.converged) return;
    const Eigen::LDLT<MatrixXd> ldlt(fit.information);
    const VectorXd cov_col = ldlt.solve(VectorXd::Unit(design.cols(), coef_index));
    const double var = cov_col(coef_index);
    if (!(var > 0) || !std::isfinite(var)) return;
    res.z(j) = fit.coef(coef_index) / std::sqrt(var);
    res.pvalue(j) = two_sided_pvalue(res.z(j));
  });
  res.qvalue = bh_adjust(res.pvalue);
  return res;
}

std::vector<MethodResult> run_baselines(const GlmDataset& data, const ExponentialFamily& family,
                                        std::optional<double> phi, Index coef_index, bool oracle) {
  std::vector<MethodResult> out;
  out.push_back(glm_wald_test(data.Y, data.X, resolve_families(data.Y, data.X, family, phi),
                              coef_index, "naive"));
  if (oracle) {
    if (!data.oracle_Z) throw InvalidInput("glm-oracle needs the oracle confounders");
    MatrixXd design(data.n(), data.d() + data.oracle_Z->cols());
    design << data.X, *data.oracle_Z;
    out.push_back(glm_wald_test(data.Y, design, resolve_families(data.Y, design, family, phi),
                                coef_index, "oracle"));
  }
  return out;
}

MetricsReport median_report(const std::vector<MetricsReport>& reports) {
  MetricsReport m;
  if (reports.empty()) return m;
  auto collect = [&](auto field) {
    std::vector<double> xs;
    for (const auto& r : reports) xs.push_back(field(r));
    return nan_median(xs);
  };
  m.type1 = collect([](const MetricsReport& r) { return r.type1; });
  m.fdp = collect([](const MetricsReport& r) { return r.fdp; });
  m.power = collect([](const MetricsReport& r) { return r.power; });
  m.precision = collect([](const MetricsReport& r) { return r.precision; });
  m.n_discoveries = static_cast<Index>(std::llround(
      collect([](const MetricsReport& r) { return static_cast<double>(r.n_discoveries); })));
  m.alpha = reports.front().alpha;
  m.fdr_cut = reports.front().fdr_cut;
  return m;
}

SimulationSummary run_simulation(const SimulationRequest& req) {
  req.scenario.validate();
  if (req.replicates < 1) throw InvalidInput("replicates must be positive");
  SimulationSummary summary;
  for (const auto& name : req.methods) {
    if (name != "gcate" && name != "naive" && name != "oracle")
      throw InvalidInput("unknown method '" + name + "' (expected gcate, naive, oracle)");
    summary.methods.push_back({name, {}, {}});
  }
  auto slot = [&](const std::string& name) -> MethodMetrics& {
    for (auto& m : summary.methods)
      if (m.method == name) return m;
    throw InvalidInput("unknown method " + name);
  };
  auto wants = [&](const std::string& name) {
    return std::find(req.methods.begin(), req.methods.end(), name) != req.methods.end();
  };
  const MetricsReport failed{kNaN, kNaN, kNaN, kNaN, req.alpha, req.fdr, 0};

  for (int rep = 0; rep < req.replicates; ++rep) {
    SimulationScenario sc = req.scenario;
    sc.seed = substream_seed(req.scenario.seed, "replicate", static_cast<std::uint64_t>(rep));
    SimulatedData sim = generate(sc);
    if (sc.kind == ScenarioKind::NegBinSingleCell) sim = drop_low_expression(sim);
    const std::string tag = "replicate " + std::to_string(rep + 1) + ": ";

    if (wants("gcate")) {
      try {
        FitConfig fc = req.fit;
        fc.rank = sc.kind == ScenarioKind::PoissonBulk ? sc.r : sc.nb_batches - 1;
        if (req.select_rank) {
          const ColumnFamilies fams = resolve_families(sim.data.Y, sim.data.X, fc.family, fc.phi);
          const int r_max = static_cast<int>(std::min<Index>(req.r_max, std::min(sim.data.n(), sim.data.p())));
          fc.rank = select_rank(sim.data.Y, sim.data.X, fams, 1, r_max, 1.0, effective_options(fc)).selected_r;
          summary.selected_ranks.push_back(static_cast<int>(fc.rank));
        }
        SplitConfig split = req.split;
        split.seed = substream_seed(req.scenario.seed, "split", static_cast<std::uint64_t>(rep));
        const InferenceResult res = run_split_inference(sim.data, fc, req.debias, split);
        slot("gcate").per_replicate.push_back(
            evaluate(res.pvalue, res.qvalue, sim.is_signal, req.alpha, req.fdr));
      } catch (const std::exception& e) {
        summary.warnings.push_back(tag + "gcate failed: " + e.what());
        slot("gcate").per_replicate.push_back(failed);
      }
    }
    if (wants("naive") || wants("oracle")) {
      try {
        const auto base = run_baselines(sim.data, req.fit.family, req.fit.phi, sim.coef_index, wants("oracle"));
        for (const auto& b : base)
          if (wants(b.method))
            slot(b.method).per_replicate.push_back(
                evaluate(b.pvalue, b.qvalue, sim.is_signal, req.alpha, req.fdr));
      } catch (const std::exception& e) {
        summary.warnings.push_back(tag + "baselines failed: " + e.what());
        if (wants("naive")) slot("naive").per_replicate.push_back(failed);
        if (wants("oracle")) slot("oracle").per_replicate.push_back(failed);
      }
    }
  }
  for (auto& m : summary.methods) m.median = median_report(m.per_replicate);
  return summary;
}

}  // namespace gcate
