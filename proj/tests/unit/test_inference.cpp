#include "helpers.hpp"

#include <limits>
#include <numeric>

using namespace gcate;

namespace {

/// Step-up BH by definition: the largest k with p_(k) <= k alpha / m, checked over all subsets.
std::vector<bool> brute_force_bh(const VectorXd& p, double alpha) {
  const Index m = p.size();
  std::vector<bool> best(static_cast<std::size_t>(m), false);
  Index best_size = 0;
  for (unsigned mask = 1; mask < (1u << m); ++mask) {
    const Index k = __builtin_popcount(mask);
    double max_in = 0, min_out = 2;
    for (Index j = 0; j < m; ++j) {
      if (mask & (1u << j)) max_in = std::max(max_in, p(j));
      else min_out = std::min(min_out, p(j));
    }
    // a valid step-up set is a prefix of the sorted p-values meeting its threshold
    if (max_in <= k * alpha / double(m) && max_in <= min_out && k > best_size) {
      best_size = k;
      for (Index j = 0; j < m; ++j) best[static_cast<std::size_t>(j)] = mask & (1u << j);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("projection direction examples") {
  CHECK((solve_projection_u(MatrixXd::Identity(3, 3), 0, 0.0) - VectorXd::Unit(3, 0)).norm() < 1e-12);
  MatrixXd S(2, 2);
  S << 2, 0, 0, 1;
  const VectorXd u = solve_projection_u(S, 0, 0.0);
  CHECK(u(0) == doctest::Approx(0.5));
  CHECK(std::abs(u(1)) < 1e-12);
  CHECK(u.dot(S * u) == doctest::Approx(0.5));
  CHECK_THROWS_AS(solve_projection_u(MatrixXd::Zero(2, 2), 0, 0.1), InvalidInput);
}

TEST_CASE("projection direction is always feasible") {
  Rng rng(2);
  std::uniform_real_distribution<double> unit(0.0, 0.5);
  for (int rep = 0; rep < 50; ++rep) {
    const MatrixXd A = test::gaussian_matrix(20, 3, rng);
    const VectorXd omega = test::gaussian_matrix(20, 1, rng).cwiseAbs().array() + 0.1;
    const double lam = unit(rng);
    const VectorXd u = solve_projection_u(A, omega, rep % 3, lam);
    MatrixXd S = A.transpose() * omega.asDiagonal() * A / 20.0;
    CHECK((S * u - VectorXd::Unit(3, rep % 3)).cwiseAbs().maxCoeff() <= lam + 1e-9);
    // no feasible point has a smaller variance proxy along a few random perturbations
    for (int t = 0; t < 5; ++t) {
      const VectorXd v = u + 0.01 * test::gaussian_matrix(3, 1, rng);
      if ((S * v - VectorXd::Unit(3, rep % 3)).cwiseAbs().maxCoeff() <= lam) CHECK(v.dot(S * v) >= u.dot(S * u) - 1e-10);
    }
  }
}

TEST_CASE("tau_n constraint is honoured when requested") {
  Rng rng(4);
  const MatrixXd X = test::gaussian_matrix(30, 2, rng);
  const VectorXd omega = VectorXd::Ones(30);
  const MatrixXd S = X.transpose() * X / 30.0;
  const VectorXd free = solve_projection_u(X, omega, 0, 0.3);
  // each interior vertex of the box gives a feasible point, hence a feasible tau
  double tau = std::numeric_limits<double>::infinity();
  for (double s0 : {-0.27, 0.27})
    for (double s1 : {-0.27, 0.27}) {
      const VectorXd t = VectorXd::Unit(2, 0) + Eigen::Vector2d(s0, s1);
      tau = std::min(tau, (X * S.ldlt().solve(t)).cwiseAbs().maxCoeff());
    }
  REQUIRE(tau < (X * free).cwiseAbs().maxCoeff());
  const VectorXd u = solve_projection_u(X, omega, 0, 0.3, tau);
  CHECK((X * u).cwiseAbs().maxCoeff() <= tau + 1e-6);
  CHECK((S * u - VectorXd::Unit(2, 0)).cwiseAbs().maxCoeff() <= 0.3 + 1e-6);
  CHECK(u.dot(S * u) >= free.dot(S * free) - 1e-10);
  CHECK_THROWS_AS(solve_projection_u(X, omega, 0, 0.3, 1e-3), InvalidInput);
}

TEST_CASE("Gaussian without confounders reduces to least squares") {
  Rng rng(4);
  const Index n = 50, p = 7;
  MatrixXd X(n, 3);
  X.col(0) = test::gaussian_matrix(n, 1, rng);
  X.col(1).setOnes();
  X.col(2) = test::gaussian_matrix(n, 1, rng);
  const MatrixXd Y = test::gaussian_matrix(n, p, rng) + X * test::gaussian_matrix(3, p, rng);
  const MatrixXd B = test::gaussian_matrix(p, 3, rng) * 0.1;  // any starting estimate
  const ColumnFamilies g(ExponentialFamily::gaussian());
  const DebiasInputs in = prepare_debias(Y, X, X * B.transpose(), B, MatrixXd(p, 0), g, 0);
  const InferenceResult res = finish_debias(in, 0.0, WeightMode::PerGene, X);
  const MatrixXd ols = (X.transpose() * X).ldlt().solve(X.transpose() * Y);
  const MatrixXd Sinv = (X.transpose() * X / double(n)).inverse();
  for (Index j = 0; j < p; ++j) {
    CHECK(std::abs(res.b_debiased(j) - ols(0, j)) < 1e-8);
    CHECK(std::abs(res.sigma_hat(j) * res.sigma_hat(j) - Sinv(0, 0)) < 1e-8);
  }
}

TEST_CASE("zero residuals leave the estimate unchanged") {
  Rng rng(5);
  const Index n = 20, p = 4;
  const MatrixXd X = test::two_column_design(n, rng);
  const MatrixXd B = test::gaussian_matrix(p, 2, rng);
  const MatrixXd Theta = X * B.transpose();
  const ColumnFamilies g(ExponentialFamily::gaussian());
  const InferenceResult res = finish_debias(prepare_debias(Theta, X, Theta, B, MatrixXd(p, 0), g, 0), 0.05,
                                            WeightMode::PerGene, X);
  CHECK((res.b_debiased - B.col(0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((res.sigma_hat.array() > 0).all());
}

TEST_CASE("z statistics and p-values") {
  InferenceResult res;
  res.n = 1;
  res.b_debiased = VectorXd(3);
  res.b_debiased << 0.0, 1.959964, -1.959964;
  res.sigma_hat = VectorXd::Ones(3);
  z_statistics(res);
  CHECK(res.pvalue(0) == 1.0);
  CHECK(res.pvalue(1) == doctest::Approx(0.05).epsilon(1e-5));
  CHECK(res.pvalue(2) == doctest::Approx(res.pvalue(1)));

  InferenceResult scaled = res;
  scaled.b_debiased *= 3.7;
  scaled.sigma_hat *= 3.7;
  z_statistics(scaled);
  CHECK((scaled.z - res.z).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Benjamini-Hochberg") {
  VectorXd p(4);
  p << 0.01, 0.02, 0.5, 0.9;
  const VectorXd q = bh_adjust(p);
  CHECK(q(0) <= 0.2);
  CHECK(q(1) <= 0.2);
  CHECK(q(2) > 0.2);
  CHECK(q(3) > 0.2);

  const VectorXd ones = VectorXd::Ones(5);
  CHECK((bh_adjust(ones).array() >= 0.999).all());

  VectorXd perm(4);
  perm << 0.5, 0.9, 0.02, 0.01;
  const VectorXd qp = bh_adjust(perm);
  CHECK(qp(0) == q(2));
  CHECK(qp(3) == q(0));

  Rng rng(6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    const Index m = 1 + rep % 8;
    VectorXd pv(m);
    for (Index j = 0; j < m; ++j) pv(j) = rep % 2 ? unit(rng) : unit(rng) * 0.1;
    const VectorXd qv = bh_adjust(pv);
    for (double alpha : {0.05, 0.1, 0.2}) {
      const auto truth = brute_force_bh(pv, alpha);
      for (Index j = 0; j < m; ++j) CHECK((qv(j) <= alpha) == truth[static_cast<std::size_t>(j)]);
    }
    // monotone in sorted p order
    std::vector<Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return pv(a) < pv(b); });
    for (std::size_t k = 1; k < order.size(); ++k) CHECK(qv(order[k]) >= qv(order[k - 1]));
  }
}

TEST_CASE("Bonferroni cutoff") {
  CHECK(bonferroni_cutoff(0.05, 1000) == doctest::Approx(4.0556).epsilon(1e-4));
  CHECK(bonferroni_cutoff(0.05, 1) == doctest::Approx(1.959964).epsilon(1e-6));
  VectorXd z(3);
  z << 1.0, 4.1, -4.2;
  const auto rej = fwer_test(z, 0.05, 1000);
  CHECK_FALSE(rej[0]);
  CHECK(rej[1]);
  CHECK(rej[2]);
}

TEST_CASE("c2 grid and lambda selection") {
  const auto grid = default_c2_grid();
  CHECK(grid.size() == 28);
  CHECK(grid.front() == doctest::Approx(0.001));
  CHECK(grid.back() == doctest::Approx(1.0));
  CHECK(default_median_threshold(ExponentialFamily::negbin(1.0)) == 0.025);
  CHECK(default_median_threshold(ExponentialFamily::poisson()) == 0.1);

  SimulationScenario sc;
  sc.n = 60;
  sc.p = 120;
  sc.seed = 9;
  const SimulatedData sim = gen_poisson_scenario(sc);
  FitConfig fc;
  fc.rank = 2;
  const FactorModelFit fit = fit_gcate(sim.data, fc);
  const DebiasInputs in = prepare_debias(sim.data.Y, sim.data.X, fit.Theta_hat, fit.B_hat, fit.Gamma_hat,
                                         fit.family, 0);
  DebiasConfig cfg;
  cfg.c2_grid = {0.05};
  CHECK(select_lambda_n(in, sim.data.X, cfg, 0.1).c2 == 0.05);

  cfg.c2_grid = default_c2_grid();
  const LambdaSelection sel = select_lambda_n(in, sim.data.X, cfg, 0.1);
  CHECK(sel.trace.size() == grid.size());
  if (sel.feasible) {
    for (const auto& e : sel.trace)
      if (e.c2 > sel.c2) CHECK(std::abs(e.median_z) > 0.1);
  }

  const InferenceResult res = run_inference(sim.data.Y, sim.data.X, fit, cfg);
  CHECK(res.qvalue.size() == 120);
  for (Index j = 0; j < 120; ++j) {
    const VectorXd u = res.u_hat.col(j);
    CHECK((in.S[static_cast<std::size_t>(j)] * u - VectorXd::Unit(2, 0)).cwiseAbs().maxCoeff() <= res.lambda_n + 1e-9);
  }
}

TEST_CASE("sample splitting") {
  SimulationScenario sc;
  sc.n = 60;
  sc.p = 80;
  sc.seed = 10;
  const SimulatedData sim = gen_poisson_scenario(sc);
  FitConfig fc;
  fc.rank = 2;
  DebiasConfig dc;
  dc.c2 = 0.01;

  SplitConfig none;
  const InferenceResult full = run_split_inference(sim.data, fc, dc, none);
  const InferenceResult direct = run_inference(sim.data.Y, sim.data.X, fit_gcate(sim.data, fc), dc);
  CHECK((full.z - direct.z).cwiseAbs().maxCoeff() == 0.0);

  SplitConfig half;
  half.ratio = 0.5;
  half.seed = 4;
  const InferenceResult a = run_split_inference(sim.data, fc, dc, half);
  const InferenceResult b = run_split_inference(sim.data, fc, dc, half);
  CHECK(a.z.size() == 80);
  CHECK(a.n == 30);
  CHECK((a.z.array() == b.z.array()).all());

  SplitConfig bad;
  bad.ratio = 1.5;
  CHECK_THROWS_AS(run_split_inference(sim.data, fc, dc, bad), InvalidInput);
}
