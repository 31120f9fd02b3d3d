#include "helpers.hpp"

using namespace gcate;
using LMatrix = Matrix<long double>;

namespace {

struct Point {
  ColumnFamilies fams;
  MatrixXd Y, X, B, Z, G;
};

/// A random feasible point and responses in the family's support.
Point random_point(const ExponentialFamily& fam, Rng& rng) {
  const Index n = 6, p = 5, d = 2, r = 2;
  Point pt{ColumnFamilies(fam), MatrixXd(n, p), MatrixXd::Ones(n, d), test::gaussian_matrix(p, d, rng, 0.3),
           test::gaussian_matrix(n, r, rng, 0.4), test::gaussian_matrix(p, r, rng, 0.4)};
  pt.X.col(1) = test::gaussian_matrix(n, 1, rng);
  if (fam.is_negbin_canonical()) pt.B.col(0).array() -= 2.5;
  std::uniform_int_distribution<int> count(0, 9);
  std::bernoulli_distribution coin(0.5);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) {
      switch (fam.kind) {
        case FamilyKind::Gaussian: pt.Y(i, j) = std::normal_distribution<double>(0, 1)(rng); break;
        case FamilyKind::Bernoulli: pt.Y(i, j) = coin(rng); break;
        case FamilyKind::Binomial: pt.Y(i, j) = std::min(count(rng), static_cast<int>(fam.aux)); break;
        default: pt.Y(i, j) = count(rng);
      }
    }
  return pt;
}

template <typename Fn>
LMatrix central_difference(const LMatrix& M, Fn&& f) {
  LMatrix out(M.rows(), M.cols());
  for (Index i = 0; i < M.rows(); ++i)
    for (Index j = 0; j < M.cols(); ++j) {
      const long double h = 1e-7L;
      LMatrix up = M, down = M;
      up(i, j) += h;
      down(i, j) -= h;
      out(i, j) = (f(up) - f(down)) / (2 * h);
    }
  return out;
}

long double max_rel(const LMatrix& a, const LMatrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-300L);
}

}  // namespace

TEST_CASE("build_theta") {
  Rng rng(3);
  MatrixXd X = test::gaussian_matrix(3, 2, rng), Z = test::gaussian_matrix(3, 1, rng);
  MatrixXd B = test::gaussian_matrix(4, 2, rng), G = test::gaussian_matrix(4, 1, rng);
  CHECK(build_theta(X, MatrixXd::Zero(4, 2), Z, MatrixXd::Zero(4, 1)).isZero(0));

  const MatrixXd ones = MatrixXd::Ones(5, 1);
  const MatrixXd c = MatrixXd::Constant(7, 1, 1.25);
  const MatrixXd flat = build_theta(ones, c, MatrixXd::Zero(5, 1), MatrixXd::Zero(7, 1));
  CHECK((flat.array() == 1.25).all());

  const MatrixXd T = build_theta(X, B, Z, G);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 4; ++j) {
      double v = 0;
      for (Index k = 0; k < 2; ++k) v += X(i, k) * B(j, k);
      v += Z(i, 0) * G(j, 0);
      CHECK(T(i, j) == doctest::Approx(v).epsilon(1e-15));
    }
  CHECK_THROWS_AS(build_theta(X, B.leftCols(1), Z, G), InvalidInput);
}

TEST_CASE("neg_log_likelihood spot values") {
  const ColumnFamilies pois(ExponentialFamily::poisson());
  CHECK(neg_log_likelihood(MatrixXd::Zero(4, 3), MatrixXd::Zero(4, 3), pois) == doctest::Approx(3.0));

  Rng rng(5);
  const MatrixXd Y = test::gaussian_matrix(4, 3, rng);
  CHECK(neg_log_likelihood(Y, Y, ColumnFamilies(ExponentialFamily::gaussian())) ==
        doctest::Approx(-Y.squaredNorm() / 8.0));

  MatrixXd y(1, 1), t(1, 1);
  y << 3;
  t << 1;
  CHECK(neg_log_likelihood(y, t, pois) == doctest::Approx(std::exp(1.0) - 3.0));

  t << 0.5;
  CHECK_THROWS_AS(neg_log_likelihood(y, t, ColumnFamilies(ExponentialFamily::negbin(1.0, Link::Canonical))),
                  DomainError);
}

TEST_CASE("deviance") {
  const ColumnFamilies pois(ExponentialFamily::poisson());
  MatrixXd y(1, 1), t(1, 1);
  y << 1;
  t << 0;
  CHECK(deviance(y, t, pois) == doctest::Approx(2.0));

  y << 4;
  double best = 1e300, arg = 0;
  for (double th = -2; th <= 4; th += 1e-3) {
    t << th;
    const double dv = deviance(y, t, pois);
    if (dv < best) best = dv, arg = th;
  }
  CHECK(arg == doctest::Approx(std::log(4.0)).epsilon(1e-3));

  Rng rng(11);
  for (const auto& fam : {ExponentialFamily::poisson(), ExponentialFamily::binomial(9), ExponentialFamily::gaussian(2.0),
                          ExponentialFamily::negbin(3.0)}) {
    Point pt = random_point(fam, rng);
    const MatrixXd T = build_theta(pt.X, pt.B, pt.Z, pt.G);
    double h = 0;
    for (Index i = 0; i < pt.Y.rows(); ++i)
      for (Index j = 0; j < pt.Y.cols(); ++j) h += log_base_measure(fam, pt.Y(i, j));
    const double expect = 2.0 * static_cast<double>(pt.Y.rows()) * neg_log_likelihood(pt.Y, T, pt.fams) - 2.0 * h;
    CHECK(deviance(pt.Y, T, pt.fams) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("likelihood gradient matches central differences in long double") {
  Rng rng(2024);
  for (const auto& fam : {ExponentialFamily::gaussian(), ExponentialFamily::bernoulli(), ExponentialFamily::binomial(9),
                          ExponentialFamily::poisson(), ExponentialFamily::negbin(2.0, Link::Canonical),
                          ExponentialFamily::negbin(2.0, Link::Log)}) {
    for (int rep = 0; rep < 10; ++rep) {
      const Point pt = random_point(fam, rng);
      const LMatrix X = pt.X.cast<long double>(), B = pt.B.cast<long double>();
      const LMatrix Z = pt.Z.cast<long double>(), G = pt.G.cast<long double>();
      const auto grad = likelihood_gradient(pt.Y, X, B, Z, G, pt.fams);
      auto nll = [&](const LMatrix& b, const LMatrix& z, const LMatrix& g) {
        return neg_log_likelihood(pt.Y, build_theta(X, b, z, g), pt.fams);
      };
      CHECK(max_rel(grad.B, central_difference(B, [&](const LMatrix& m) { return nll(m, Z, G); })) < 1e-5L);
      CHECK(max_rel(grad.Z, central_difference(Z, [&](const LMatrix& m) { return nll(B, m, G); })) < 1e-5L);
      CHECK(max_rel(grad.Gamma, central_difference(G, [&](const LMatrix& m) { return nll(B, Z, m); })) < 1e-5L);
    }
  }
}

TEST_CASE("negative log-likelihood is convex in Theta") {
  Rng rng(8);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  for (const auto& fam : {ExponentialFamily::poisson(), ExponentialFamily::bernoulli(), ExponentialFamily::gaussian()}) {
    for (int rep = 0; rep < 20; ++rep) {
      const Point pt = random_point(fam, rng);
      const MatrixXd T1 = test::gaussian_matrix(6, 5, rng), T2 = test::gaussian_matrix(6, 5, rng);
      const double t = unit(rng);
      const double mix = neg_log_likelihood(pt.Y, MatrixXd(t * T1 + (1 - t) * T2), pt.fams);
      CHECK(mix <= t * neg_log_likelihood(pt.Y, T1, pt.fams) + (1 - t) * neg_log_likelihood(pt.Y, T2, pt.fams) + 1e-10);
    }
  }
}

TEST_CASE("dataset validation") {
  GlmDataset data;
  data.Y = MatrixXd::Ones(4, 3);
  data.X = MatrixXd::Ones(4, 2);
  CHECK_THROWS_AS(data.validate(ExponentialFamily::poisson()), InvalidInput);  // collinear X
  data.X.col(1) << 0, 1, 2, 3;
  CHECK_NOTHROW(data.validate(ExponentialFamily::poisson()));
  data.Y(0, 0) = -1;
  CHECK_THROWS_AS(data.validate(ExponentialFamily::poisson()), InvalidInput);
  data.Y(0, 0) = 2;
  CHECK_THROWS_AS(data.validate(ExponentialFamily::bernoulli()), InvalidInput);
}
