#include "helpers.hpp"

using namespace gcate;

TEST_CASE("Poisson scenario structure") {
  SimulationScenario sc;
  sc.n = 100;
  sc.p = 3000;
  sc.seed = 21;
  const SimulatedData sim = gen_poisson_scenario(sc);
  double frac = 0;
  for (bool s : sim.is_signal) frac += s;
  frac /= 3000.0;
  CHECK(std::abs(frac - 0.05) <= 0.02);
  for (Index j = 0; j < 3000; ++j) {
    CHECK(std::abs(sim.B(j, 1) - 0.5) == 0.0);
    if (sim.is_signal[static_cast<std::size_t>(j)]) CHECK(std::abs(sim.B(j, 0)) == doctest::Approx(0.2));
    else CHECK(sim.B(j, 0) == 0.0);
  }
  const double scale = std::sqrt(3000.0 / 2.0);
  CHECK(sim.Gamma.col(0).norm() == doctest::Approx(scale * 2.0).epsilon(1e-10));
  CHECK(sim.Gamma.col(1).norm() == doctest::Approx(scale * 1.0).epsilon(1e-10));
  CHECK(std::abs(sim.Gamma.col(0).dot(sim.Gamma.col(1))) < 1e-8 * scale * scale);
  CHECK((sim.data.X.col(1).array() == 1.0).all());
  CHECK((sim.data.X.col(0).array().abs() == 1.0).all());

  SimulationScenario bad = sc;
  bad.r = 1;
  CHECK_THROWS_AS(gen_poisson_scenario(bad), InvalidInput);
}

TEST_CASE("generation is reproducible for a fixed seed") {
  SimulationScenario sc;
  sc.n = 40;
  sc.p = 50;
  sc.seed = 77;
  const SimulatedData a = gen_poisson_scenario(sc), b = gen_poisson_scenario(sc);
  CHECK((a.data.Y.array() == b.data.Y.array()).all());
  CHECK((a.Gamma.array() == b.Gamma.array()).all());
  sc.seed = 78;
  CHECK_FALSE((gen_poisson_scenario(sc).data.Y.array() == a.data.Y.array()).all());
}

TEST_CASE("Poisson counts have the model mean and variance") {
  SimulationScenario sc;
  sc.n = 250;
  sc.p = 400;
  sc.seed = 5;
  const SimulatedData sim = gen_poisson_scenario(sc);
  const MatrixXd mu = build_theta(sim.data.X, sim.B, *sim.data.oracle_Z, sim.Gamma).array().exp();
  const Eigen::ArrayXXd std_res = (sim.data.Y - mu).array() / mu.array().sqrt();
  const double cells = 250.0 * 400.0;
  const double m = std_res.sum() / cells;
  const double v = std_res.square().sum() / cells;
  CHECK(std::abs(m) < 3.0 / std::sqrt(cells));
  CHECK(std::abs(v - 1.0) < 0.05);
}

TEST_CASE("Haar orthonormal matrices") {
  Rng rng(4);
  const MatrixXd Q = random_orthonormal(30, 4, rng);
  CHECK((Q.transpose() * Q - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("negative binomial scenario") {
  SimulationScenario pois;
  pois.n = 100;
  pois.p = 300;
  pois.seed = 3;
  const SimulatedData ps = gen_poisson_scenario(pois);
  const SimulationScenario nbs = SimulationScenario::negbin_defaults(100, 300);
  SimulationScenario nbc = nbs;
  nbc.seed = 3;
  const SimulatedData nb = gen_negbin_scenario(nbc);
  const double zero_nb = (nb.data.Y.array() == 0).cast<double>().mean();
  const double zero_p = (ps.data.Y.array() == 0).cast<double>().mean();
  CHECK(zero_nb > zero_p);

  VectorXd means(300), disp(300);
  for (Index j = 0; j < 300; ++j) {
    means(j) = std::log(nb.data.Y.col(j).mean() + 1e-3);
    disp(j) = nb.phi(j);
  }
  // low-expressed genes are more dispersed, i.e. have a smaller phi
  CHECK(spearman(means, disp) > 0.0);
  CHECK(nb.data.X.cols() == 3);
  CHECK(nb.data.oracle_Z->cols() == nbc.nb_batches - 1);

  const SimulatedData kept = drop_low_expression(nb);
  Index flagged = 0;
  for (bool f : nb.low_expression) flagged += f;
  CHECK(kept.data.p() == 300 - flagged);
}

TEST_CASE("evaluate") {
  VectorXd p(4), q(4);
  p << 0, 0, 1, 1;
  q = p;
  const std::vector<bool> truth = {true, true, false, false};
  const MetricsReport perfect = evaluate(p, q, truth, 0.05, 0.2);
  CHECK(perfect.type1 == 0.0);
  CHECK(perfect.power == 1.0);
  CHECK(perfect.fdp == 0.0);
  CHECK(perfect.precision == 1.0);

  const MetricsReport none = evaluate(VectorXd::Ones(4), VectorXd::Ones(4), truth, 0.05, 0.2);
  CHECK(none.fdp == 0.0);
  CHECK(none.n_discoveries == 0);

  const MetricsReport nan = evaluate(p, q, {false, false, false, false}, 0.05, 0.2);
  CHECK(std::isnan(nan.power));

  Rng rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index m = 20000;
  VectorXd up(m);
  for (Index j = 0; j < m; ++j) up(j) = unit(rng);
  const MetricsReport uni = evaluate(up, up, std::vector<bool>(m, false), 0.05, 0.2);
  CHECK(std::abs(uni.type1 - 0.05) < 3 * std::sqrt(0.05 * 0.95 / m));

  std::vector<bool> rev(truth.rbegin(), truth.rend());
  VectorXd pr = p.reverse(), qr = q.reverse();
  CHECK(evaluate(pr, qr, rev, 0.05, 0.2).type1 == perfect.type1);
}

TEST_CASE("median report ignores NaN") {
  MetricsReport a, b, c;
  a.type1 = 0.1, b.type1 = 0.3, c.type1 = std::nan("");
  CHECK(median_report({a, b, c}).type1 == doctest::Approx(0.2));
}

TEST_CASE("baselines without confounding agree") {
  SimulationScenario sc;
  sc.n = 80;
  sc.p = 60;
  sc.seed = 2;
  sc.confounding = 0.0;
  const SimulatedData sim = gen_poisson_scenario(sc);
  const auto res = run_baselines(sim.data, ExponentialFamily::poisson(), std::nullopt, 0, true);
  REQUIRE(res.size() == 2);
  CHECK(res[0].method == "naive");
  CHECK(res[1].method == "oracle");
  // the oracle adds Z, which carries no signal here, so the tests nearly coincide
  CHECK(spearman(res[0].z, res[1].z) > 0.9);
}
