#pragma once

// One-parameter exponential families in canonical form, plus the
// Negative Binomial log link. Scalar routines are templated so the
// finite-difference checks can run in extended precision.

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gcate {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class FamilyKind { Gaussian, Bernoulli, Binomial, Poisson, NegBin };
enum class Link { Canonical, Log };

struct NaturalDomain {
  enum class Kind { Box, NegativeHalfLine };
  double lower;
  double upper;
  Kind kind;

  bool contains(double v) const { return v >= lower && v <= upper; }
};

/// Dispersion clip range for the NB1 parameter alpha = 1/phi.
inline constexpr double kMinAlpha = 1e-2;
inline constexpr double kMaxAlpha = 1e2;

/// Default boundedness constant for the natural parameter box.
inline constexpr double kDefaultBound = 16.0;

/// Clamp margin keeping NB canonical iterates strictly negative.
inline constexpr double kNegBinMargin = 1e-6;

struct ExponentialFamily {
  FamilyKind kind = FamilyKind::Poisson;
  /// sigma^2 (Gaussian), trial count m (Binomial), failures phi (NegBin).
  double aux = 1.0;
  Link link = Link::Canonical;
  double bound = kDefaultBound;

  static ExponentialFamily gaussian(double variance = 1.0) {
    return {FamilyKind::Gaussian, variance, Link::Canonical};
  }
  static ExponentialFamily bernoulli() { return {FamilyKind::Bernoulli, 1.0, Link::Canonical}; }
  static ExponentialFamily binomial(int trials) {
    return {FamilyKind::Binomial, static_cast<double>(trials), Link::Canonical};
  }
  static ExponentialFamily poisson() { return {FamilyKind::Poisson, 1.0, Link::Canonical}; }
  static ExponentialFamily negbin(double phi, Link link = Link::Log) {
    return {FamilyKind::NegBin, phi, link};
  }

  bool is_negbin_log() const { return kind == FamilyKind::NegBin && link == Link::Log; }
  bool is_negbin_canonical() const {
    return kind == FamilyKind::NegBin && link == Link::Canonical;
  }
  bool count_like() const {
    return kind == FamilyKind::Poisson || kind == FamilyKind::NegBin;
  }

  ExponentialFamily with_aux(double value) const {
    ExponentialFamily f = *this;
    f.aux = value;
    return f;
  }

  void validate() const {
    if (link == Link::Log && kind != FamilyKind::NegBin)
      throw InvalidInput("log link is only supported for the negative binomial family");
    if (!(bound > 1.0)) throw InvalidInput("boundedness constant must exceed 1");
    switch (kind) {
      case FamilyKind::Gaussian:
        if (!(aux > 0)) throw InvalidInput("gaussian variance must be positive");
        break;
      case FamilyKind::Binomial:
        if (!(aux >= 1) || aux != std::floor(aux))
          throw InvalidInput("binomial trial count must be a positive integer");
        break;
      case FamilyKind::NegBin:
        if (!(aux > 0)) throw InvalidInput("negative binomial phi must be positive");
        break;
      default:
        break;
    }
  }

  /// Parameter space of theta, intersected with the boundedness box.
  NaturalDomain natural_domain() const {
    if (kind == FamilyKind::NegBin)
      return {-bound, -1.0 / bound, NaturalDomain::Kind::NegativeHalfLine};
    return {-bound, bound, NaturalDomain::Kind::Box};
  }

  /// Where the optimizer may move the linear predictor (theta for
  /// canonical links, xi for the NB log link). No box here: boundedness is
  /// enforced through the gradient ball, only the NB canonical sign is hard.
  NaturalDomain predictor_domain() const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (is_negbin_canonical()) return {-inf, -kNegBinMargin, NaturalDomain::Kind::NegativeHalfLine};
    return {-inf, inf, NaturalDomain::Kind::Box};
  }
};

std::string_view to_string(FamilyKind kind);
FamilyKind family_kind_from_string(std::string_view name);

namespace detail {

template <std::floating_point T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <std::floating_point T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

inline void require_negative(double theta) {
  if (!(theta < 0.0))
    throw DomainError("negative binomial natural parameter must be negative, got " +
                      std::to_string(theta));
}

}  // namespace detail

template <std::floating_point T>
T log_partition(const ExponentialFamily& fam, T theta) {
  switch (fam.kind) {
    case FamilyKind::Gaussian:
      return theta * theta / T(2);
    case FamilyKind::Bernoulli:
      return detail::softplus(theta);
    case FamilyKind::Binomial:
      return T(fam.aux) * detail::softplus(theta);
    case FamilyKind::Poisson:
      return std::exp(theta);
    case FamilyKind::NegBin:
      detail::require_negative(static_cast<double>(theta));
      return -T(fam.aux) * std::log(-std::expm1(theta));
  }
  return std::numeric_limits<T>::quiet_NaN();
}

/// A'(theta).
template <std::floating_point T>
T mean(const ExponentialFamily& fam, T theta) {
  switch (fam.kind) {
    case FamilyKind::Gaussian:
      return theta;
    case FamilyKind::Bernoulli:
      return detail::sigmoid(theta);
    case FamilyKind::Binomial:
      return T(fam.aux) * detail::sigmoid(theta);
    case FamilyKind::Poisson:
      return std::exp(theta);
    case FamilyKind::NegBin:
      detail::require_negative(static_cast<double>(theta));
      return T(fam.aux) * std::exp(theta) / -std::expm1(theta);
  }
  return std::numeric_limits<T>::quiet_NaN();
}

/// A''(theta).
template <std::floating_point T>
T variance(const ExponentialFamily& fam, T theta) {
  switch (fam.kind) {
    case FamilyKind::Gaussian:
      return T(1);
    case FamilyKind::Bernoulli: {
      const T mu = detail::sigmoid(theta);
      return mu * (T(1) - mu);
    }
    case FamilyKind::Binomial: {
      const T mu = detail::sigmoid(theta);
      return T(fam.aux) * mu * (T(1) - mu);
    }
    case FamilyKind::Poisson:
      return std::exp(theta);
    case FamilyKind::NegBin: {
      detail::require_negative(static_cast<double>(theta));
      const T em1 = std::expm1(theta);
      return T(fam.aux) * std::exp(theta) / (em1 * em1);
    }
  }
  return std::numeric_limits<T>::quiet_NaN();
}

/// theta = log(e^xi / (phi + e^xi)), written as -softplus(log phi - xi).
template <std::floating_point T>
T nb_theta_from_xi(T xi, T phi) {
  return -detail::softplus(std::log(phi) - xi);
}

template <std::floating_point T>
struct NbLogLinkWeight {
  T weight;      // phi e^xi / (phi + e^xi)
  T dtheta_dxi;  // phi / (phi + e^xi)
};

template <std::floating_point T>
NbLogLinkWeight<T> nb_log_link_weight(T xi, T phi) {
  const T dtheta = detail::sigmoid(std::log(phi) - xi);
  return {std::exp(xi) * dtheta, dtheta};
}

/// Natural parameter for a linear predictor value under the family's link.
template <std::floating_point T>
T theta_from_predictor(const ExponentialFamily& fam, T eta) {
  return fam.is_negbin_log() ? nb_theta_from_xi(eta, T(fam.aux)) : eta;
}

/// Per-cell quantities of the negative log-likelihood as a function of the
/// linear predictor eta, for sufficient statistic t.
template <std::floating_point T>
struct PredictorEval {
  T loss;    // A(theta(eta)) - t * theta(eta)
  T grad;    // d loss / d eta
  T weight;  // expected d^2 loss / d eta^2 (exact for canonical links)
  T mu;      // E[t]
};

template <std::floating_point T>
PredictorEval<T> evaluate_predictor(const ExponentialFamily& fam, T t, T eta) {
  if (fam.is_negbin_log()) {
    const T phi = T(fam.aux);
    const T log_phi = std::log(phi);
    const T theta = -detail::softplus(log_phi - eta);
    const T a = phi * detail::softplus(eta - log_phi);
    const T mu = std::exp(eta);
    const T dtheta = detail::sigmoid(log_phi - eta);
    return {a - t * theta, -(t - mu) * dtheta, mu * dtheta, mu};
  }
  if (fam.kind == FamilyKind::Poisson) {
    const T mu = std::exp(eta);
    return {mu - t * eta, mu - t, mu, mu};
  }
  const T mu = mean(fam, eta);
  return {log_partition(fam, eta) - t * eta, mu - t, variance(fam, eta), mu};
}

/// Loss only; cheaper than evaluate_predictor inside line searches.
template <std::floating_point T>
T predictor_loss(const ExponentialFamily& fam, T t, T eta) {
  if (fam.is_negbin_log()) {
    const T log_phi = std::log(T(fam.aux));
    return T(fam.aux) * detail::softplus(eta - log_phi) + t * detail::softplus(log_phi - eta);
  }
  if (fam.kind == FamilyKind::Poisson) return std::exp(eta) - t * eta;
  return log_partition(fam, eta) - t * eta;
}

/// d mu / d eta; the working residual is (t - mu) / (d mu / d eta).
template <std::floating_point T>
T mean_derivative(const ExponentialFamily& fam, T eta) {
  if (fam.is_negbin_log()) return std::exp(eta);
  return variance(fam, eta);
}

/// Sufficient statistic T(y): y / sigma for the Gaussian, y otherwise.
inline double sufficient_stat(const ExponentialFamily& fam, double y) {
  return fam.kind == FamilyKind::Gaussian ? y / std::sqrt(fam.aux) : y;
}

/// log h(y), the base measure excluded from the likelihood.
inline double log_base_measure(const ExponentialFamily& fam, double y) {
  switch (fam.kind) {
    case FamilyKind::Gaussian:
      return -y * y / (2.0 * fam.aux) - 0.5 * std::log(2.0 * M_PI * fam.aux);
    case FamilyKind::Bernoulli:
      return 0.0;
    case FamilyKind::Binomial:
      return std::lgamma(fam.aux + 1.0) - std::lgamma(y + 1.0) - std::lgamma(fam.aux - y + 1.0);
    case FamilyKind::Poisson:
      return -std::lgamma(y + 1.0);
    case FamilyKind::NegBin:
      return std::lgamma(y + fam.aux) - std::lgamma(fam.aux) - std::lgamma(y + 1.0);
  }
  return 0.0;
}

/// Whether y is in the support of the family.
bool valid_response(const ExponentialFamily& fam, double y);

/// Starting value for the linear predictor given a single response, used
/// to seed per-gene GLM fits (a smoothed link transform of y).
double initial_predictor(const ExponentialFamily& fam, double y);

/// Method-of-moments NB dispersion from a constant fitted mean. Solves
/// (1/n) sum (y - mu)^2 = mu (1 + alpha mu), clips alpha, returns phi = 1/alpha.
double estimate_dispersion(const Eigen::Ref<const Eigen::VectorXd>& y, double mu_hat);

/// Same moment equation with per-sample fitted means.
double estimate_dispersion(const Eigen::Ref<const Eigen::VectorXd>& y,
                           const Eigen::Ref<const Eigen::VectorXd>& mu_hat);

}  // namespace gcate
