#include "cli.hpp"

#include "gcate/io.hpp"
#include "gcate/parallel.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <sstream>

namespace gcate {
namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<double> auto_or_number(const std::string& text, const char* flag) {
  if (text == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v) || v < 0) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string(flag) + ": expected 'auto' or a non-negative number, got '" + text + "'");
  }
}

double split_ratio(const std::string& text) {
  if (text == "none") return 1.0;
  if (text == "half") return 0.5;
  double v = 0.0;
  try {
    std::size_t used = 0;
    v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    v = -1.0;
  }
  if (!(v > 0.0 && v <= 1.0)) throw UsageError("--split: expected none, half or a ratio in (0, 1], got '" + text + "'");
  return v;
}

struct DataFlags {
  std::string counts;
  std::string design;
  std::string family = "poisson";
  std::string nb_link = "log";
  std::string phi = "auto";
  int trials = 1;
  double variance = 1.0;
  std::string lambda = "auto";
  std::optional<double> c_prime;
  int max_iters = 200;
  double tol = 1e-4;

  void add(CLI::App* app) {
    app->add_option("--counts", counts, "Counts: CSV with gene header, or MatrixMarket")->required()->check(CLI::ExistingFile);
    app->add_option("--design", design, "Design CSV with covariate header")->required()->check(CLI::ExistingFile);
    app->add_option("--family", family, "Response family")
        ->check(CLI::IsMember({"gaussian", "bernoulli", "binomial", "poisson", "negbin"}))
        ->capture_default_str();
    app->add_option("--nb-link", nb_link, "NegBin link")->check(CLI::IsMember({"canonical", "log"}))->capture_default_str();
    app->add_option("--phi", phi, "NegBin phi: auto or a value")->capture_default_str();
    app->add_option("--trials", trials, "Binomial trial count")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--variance", variance, "Gaussian variance")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--lambda", lambda, "Lasso level for B: auto or a value")->capture_default_str();
    app->add_option("--c-prime", c_prime, "Gradient ball constant C'")->check(CLI::PositiveNumber);
    app->add_option("--max-iters", max_iters, "Outer iterations per stage")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--tol", tol, "Stop after 20 sweeps improving the objective by less than this")->check(CLI::PositiveNumber)->capture_default_str();
  }

  ExponentialFamily make_family() const {
    const FamilyKind kind = family_kind_from_string(family);
    switch (kind) {
      case FamilyKind::Gaussian: return ExponentialFamily::gaussian(variance);
      case FamilyKind::Bernoulli: return ExponentialFamily::bernoulli();
      case FamilyKind::Binomial: return ExponentialFamily::binomial(trials);
      case FamilyKind::Poisson: return ExponentialFamily::poisson();
      case FamilyKind::NegBin: {
        const auto fixed = auto_or_number(phi, "--phi");
        return ExponentialFamily::negbin(fixed.value_or(1.0), nb_link == "log" ? Link::Log : Link::Canonical);
      }
    }
    throw UsageError("unknown family " + family);
  }

  FitConfig make_config(Index rank) const {
    FitConfig cfg;
    cfg.family = make_family();
    cfg.rank = rank;
    cfg.lambda = auto_or_number(lambda, "--lambda");
    if (cfg.family.kind == FamilyKind::NegBin) cfg.phi = auto_or_number(phi, "--phi");
    cfg.c_prime = c_prime;
    cfg.opts.max_outer_iters = max_iters;
    cfg.opts.obj_tol = tol;
    return cfg;
  }
};

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

int run_fit(const DataFlags& flags, int rank, std::uint64_t seed, const std::string& out) {
  GlmDataset data = read_dataset(flags.counts, flags.design);
  ensure_names(data);
  const FitConfig cfg = flags.make_config(rank);
  FitRecord rec;
  rec.fit = fit_gcate(data, cfg);
  rec.gene_names = data.gene_names;
  rec.covariate_names = data.covariate_names;
  rec.counts_path = flags.counts;
  rec.design_path = flags.design;
  rec.nb_link = flags.nb_link;
  rec.phi = cfg.phi;
  rec.lambda = cfg.lambda;
  rec.c_prime = cfg.c_prime;
  rec.max_iters = flags.max_iters;
  rec.tol = flags.tol;
  rec.seed = seed;
  write_fit_json(out, rec);
  print_warnings(rec.fit.diagnostics.warnings);
  const auto& dg = rec.fit.diagnostics;
  std::cout << "fit: n=" << data.n() << " p=" << data.p() << " d=" << data.d() << " r=" << rec.fit.r
            << " lambda=" << rec.fit.lambda << " stage1_iters=" << dg.stage1_iterations
            << " stage3_iters=" << dg.stage3_iterations << " -> " << out << '\n';
  return 0;
}

struct TestFlags {
  std::string fit;
  int coef = 1;
  std::string lambda_n = "auto";
  double alpha = 0.05;
  double fdr = 0.2;
  std::string split = "none";
  std::optional<double> tau_n;
  bool per_gene_u = false;
  bool shared_u = false;
  bool strict_loo = false;
  bool unweighted_projection = false;
  std::optional<std::uint64_t> seed;
  std::string trace;
  std::string out;
};

int run_test(const TestFlags& f) {
  const FitRecord rec = read_fit_json(f.fit);
  GlmDataset data = read_dataset(rec.counts_path, rec.design_path);
  data.gene_names = rec.gene_names;
  data.covariate_names = rec.covariate_names;
  if (data.p() != rec.fit.B_hat.rows() || data.d() != rec.fit.B_hat.cols() || data.n() != rec.fit.Theta_hat.rows())
    throw InvalidInput("data referenced by " + f.fit + " no longer matches the fit dimensions");
  if (f.coef < 1 || f.coef > data.d())
    throw UsageError("--coef must lie in [1, " + std::to_string(data.d()) + "]");
  if (f.per_gene_u && f.shared_u) throw UsageError("--per-gene-u and --shared-u are exclusive");

  DebiasConfig cfg;
  cfg.coef_index = f.coef - 1;
  if (const auto c2 = auto_or_number(f.lambda_n, "--lambda-n")) {
    if (*c2 <= 0) throw UsageError("--lambda-n must be positive");
    cfg.c2 = c2;
  }
  cfg.tau_n = f.tau_n;
  if (f.shared_u) cfg.mode = WeightMode::Shared;
  if (f.unweighted_projection) cfg.projection = ProjectionRule::Unweighted;

  LambdaSelection selection;
  InferenceResult res;
  const double ratio = split_ratio(f.split);
  if (ratio >= 1.0) {
    res = run_inference(data.Y, data.X, rec.fit, cfg, &selection);
    res.gene_names = data.gene_names;
  } else {
    FitConfig fc;
    fc.family = rec.fit.family.base;
    fc.rank = rec.fit.r;
    fc.lambda = rec.lambda;
    fc.phi = rec.phi;
    fc.c_prime = rec.c_prime;
    fc.opts.max_outer_iters = rec.max_iters;
    fc.opts.obj_tol = rec.tol;
    SplitConfig split;
    split.ratio = ratio;
    split.seed = f.seed.value_or(rec.seed);
    split.strict_leave_one_out = f.strict_loo;
    res = run_split_inference(data, fc, cfg, split, &selection);
  }
  write_results(f.out, res, f.alpha, f.fdr);
  if (!f.trace.empty()) write_test_trace_json(f.trace, res, cfg.c2 ? nullptr : &selection, f.alpha);
  print_warnings(res.warnings);

  Index by_alpha = 0, by_fdr = 0;
  for (Index j = 0; j < res.p(); ++j) {
    by_alpha += res.pvalue(j) < f.alpha;
    by_fdr += res.qvalue(j) <= f.fdr;
  }
  Index by_fwer = 0;
  for (const bool b : fwer_test(res.z, f.alpha, res.p())) by_fwer += b;
  std::cout << "test: coef=" << f.coef << " lambda_n=" << res.lambda_n << " p<" << f.alpha << ": " << by_alpha
            << " q<=" << f.fdr << ": " << by_fdr << " bonferroni: " << by_fwer << " -> " << f.out << '\n';
  return 0;
}

int run_select_rank(const DataFlags& flags, int r_min, int r_max, double c_jic, const std::string& out) {
  if (r_min < 0 || r_max < r_min) throw UsageError("need 0 <= --r-min <= --r-max");
  GlmDataset data = read_dataset(flags.counts, flags.design);
  ensure_names(data);
  const FitConfig cfg = flags.make_config(r_min);
  data.validate(cfg.family);
  const ColumnFamilies fams = resolve_families(data.Y, data.X, cfg.family, cfg.phi);
  const JicTrace trace = select_rank(data.Y, data.X, fams, r_min, r_max, c_jic, effective_options(cfg));
  write_jic_json(out, trace);
  print_warnings(trace.messages);
  std::cout << "select-rank: r=" << trace.selected_r << " -> " << out << '\n';
  return 0;
}

struct SimulateFlags {
  std::string scenario = "poisson-bulk";
  Index n = 250;
  Index p = 1000;
  Index rank = 2;
  int reps = 20;
  std::uint64_t seed = 7;
  double alpha = 0.05;
  double fdr = 0.2;
  std::string methods = "gcate,naive,oracle";
  std::optional<double> signal_prob;
  std::optional<double> magnitude;
  std::string split = "none";
  bool select_rank = false;
  int r_max = 6;
  std::string out;
};

int run_simulate(const SimulateFlags& f) {
  SimulationRequest req;
  if (f.scenario == "poisson-bulk") {
    req.scenario.kind = ScenarioKind::PoissonBulk;
    req.scenario.n = f.n;
    req.scenario.p = f.p;
    req.scenario.r = f.rank;
    req.fit.family = ExponentialFamily::poisson();
  } else {
    req.scenario = SimulationScenario::negbin_defaults(f.n, f.p);
    req.fit.family = ExponentialFamily::negbin(1.0, Link::Log);
  }
  req.scenario.seed = f.seed;
  if (f.signal_prob) req.scenario.signal_prob = *f.signal_prob;
  if (f.magnitude) req.scenario.signal_magnitude = *f.magnitude;
  req.replicates = f.reps;
  req.alpha = f.alpha;
  req.fdr = f.fdr;
  req.methods.clear();
  std::stringstream ss(f.methods);
  for (std::string m; std::getline(ss, m, ',');)
    if (!m.empty()) req.methods.push_back(m);
  if (req.methods.empty()) throw UsageError("--methods is empty");
  req.split.ratio = split_ratio(f.split);
  req.select_rank = f.select_rank;
  req.r_max = f.r_max;

  const SimulationSummary summary = run_simulation(req);
  write_metrics_json(f.out, req, summary);
  print_warnings(summary.warnings);
  for (const auto& m : summary.methods)
    std::cout << m.method << ": type1=" << m.median.type1 << " fdp=" << m.median.fdp << " power=" << m.median.power
              << " precision=" << m.median.precision << '\n';
  return 0;
}

void print_usage_for(const CLI::App& app, const std::vector<CLI::App*>& subs) {
  for (const CLI::App* sub : subs)
    if (sub->parsed()) {
      std::cerr << sub->help();
      return;
    }
  std::cerr << app.help();
}

}  // namespace

int parse_and_dispatch(int argc, char** argv) {
  CLI::App app{"Confounder-adjusted GLM estimation and debiased inference", "gcate"};
  app.require_subcommand(1);
  std::optional<int> threads;
  app.add_option("--threads", threads, "Worker threads (default GCATE_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  DataFlags fit_flags;
  int fit_rank = 1;
  std::uint64_t fit_seed = 0;
  std::string fit_out;
  CLI::App* fit = app.add_subcommand("fit", "Estimate B, Z and Gamma");
  fit_flags.add(fit);
  fit->add_option("--rank", fit_rank, "Number of latent factors")->required()->check(CLI::NonNegativeNumber);
  fit->add_option("--seed", fit_seed, "Seed recorded for later sample splitting")->capture_default_str();
  fit->add_option("--out", fit_out, "Fit JSON")->required();

  TestFlags test_flags;
  CLI::App* test = app.add_subcommand("test", "Debiased tests of one coefficient");
  test->add_option("--fit", test_flags.fit, "Fit JSON written by `gcate fit`")->required()->check(CLI::ExistingFile);
  test->add_option("--coef", test_flags.coef, "One-based column of the design under test")->capture_default_str();
  test->add_option("--lambda-n", test_flags.lambda_n, "auto or the constant c2")->capture_default_str();
  test->add_option("--alpha", test_flags.alpha, "Per-gene level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  test->add_option("--fdr", test_flags.fdr, "BH level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  test->add_option("--split", test_flags.split, "none, half, or the inference fraction")->capture_default_str();
  test->add_option("--tau-n", test_flags.tau_n, "Bound on |x_i^T u|")->check(CLI::PositiveNumber);
  test->add_flag("--per-gene-u", test_flags.per_gene_u, "Solve u per gene (default)");
  test->add_flag("--shared-u", test_flags.shared_u, "One u from gene-averaged weights");
  test->add_flag("--unweighted-projection", test_flags.unweighted_projection,
                 "Project residuals onto the complement of Gamma without weights");
  test->add_flag("--strict-loo", test_flags.strict_loo, "Leave-one-gene-out refit under splitting");
  test->add_option("--seed", test_flags.seed, "Split seed (default: the seed stored in the fit)");
  test->add_option("--trace", test_flags.trace, "Optional JSON with the lambda_n scree and z histogram");
  test->add_option("--out", test_flags.out, "Results TSV")->required();

  DataFlags rank_flags;
  int r_min = 1, r_max = 10;
  double c_jic = 1.0;
  std::string rank_out;
  CLI::App* rank = app.add_subcommand("select-rank", "Choose the number of factors by JIC");
  rank_flags.add(rank);
  rank->add_option("--r-min", r_min, "Smallest rank")->capture_default_str();
  rank->add_option("--r-max", r_max, "Largest rank")->capture_default_str();
  rank->add_option("--c-jic", c_jic, "Penalty constant")->check(CLI::PositiveNumber)->capture_default_str();
  rank->add_option("--out", rank_out, "JIC trace JSON")->required();

  SimulateFlags sim_flags;
  CLI::App* sim = app.add_subcommand("simulate", "Replicated simulation with GLM baselines");
  sim->add_option("--scenario", sim_flags.scenario, "Data generator")
      ->check(CLI::IsMember({"poisson-bulk", "negbin-sc"}))
      ->capture_default_str();
  sim->add_option("--n", sim_flags.n, "Samples")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--p", sim_flags.p, "Genes")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--rank", sim_flags.rank, "Latent factors (poisson-bulk)")->check(CLI::NonNegativeNumber)->capture_default_str();
  sim->add_option("--reps", sim_flags.reps, "Replicates")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--seed", sim_flags.seed, "Master seed")->capture_default_str();
  sim->add_option("--alpha", sim_flags.alpha, "Per-gene level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  sim->add_option("--fdr", sim_flags.fdr, "BH level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  sim->add_option("--methods", sim_flags.methods, "Comma list of gcate, naive, oracle")->capture_default_str();
  sim->add_option("--signal-prob", sim_flags.signal_prob, "Probability a gene carries a signal")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--signal-magnitude", sim_flags.magnitude, "Absolute signal size")->check(CLI::NonNegativeNumber);
  sim->add_option("--split", sim_flags.split, "none, half, or the inference fraction")->capture_default_str();
  sim->add_flag("--select-rank", sim_flags.select_rank, "Pick the rank by JIC in each replicate");
  sim->add_option("--r-max", sim_flags.r_max, "Largest rank for --select-rank")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--out", sim_flags.out, "Metrics JSON")->required();

  // Subcommand-level --threads as well, so it may follow the command name.
  for (CLI::App* sub : {fit, test, rank, sim})
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  const std::vector<CLI::App*> subs = {fit, test, rank, sim};
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    print_usage_for(app, subs);
    return 2;
  }

  if (threads) set_num_threads(*threads);
  try {
    if (fit->parsed()) return run_fit(fit_flags, fit_rank, fit_seed, fit_out);
    if (test->parsed()) return run_test(test_flags);
    if (rank->parsed()) return run_select_rank(rank_flags, r_min, r_max, c_jic, rank_out);
    if (sim->parsed()) return run_simulate(sim_flags);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace gcate
