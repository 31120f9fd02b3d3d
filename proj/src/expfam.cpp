#include "gcate/expfam.hpp"

#include <algorithm>

namespace gcate {

std::string_view to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Gaussian:
      return "gaussian";
    case FamilyKind::Bernoulli:
      return "bernoulli";
    case FamilyKind::Binomial:
      return "binomial";
    case FamilyKind::Poisson:
      return "poisson";
    case FamilyKind::NegBin:
      return "negbin";
  }
  return "unknown";
}

FamilyKind family_kind_from_string(std::string_view name) {
  if (name == "gaussian") return FamilyKind::Gaussian;
  if (name == "bernoulli") return FamilyKind::Bernoulli;
  if (name == "binomial") return FamilyKind::Binomial;
  if (name == "poisson") return FamilyKind::Poisson;
  if (name == "negbin") return FamilyKind::NegBin;
  throw InvalidInput("unknown family '" + std::string(name) + "'");
}

bool valid_response(const ExponentialFamily& fam, double y) {
  if (!std::isfinite(y)) return false;
  switch (fam.kind) {
    case FamilyKind::Gaussian:
      return true;
    case FamilyKind::Bernoulli:
      return y == 0.0 || y == 1.0;
    case FamilyKind::Binomial:
      return y >= 0.0 && y <= fam.aux && y == std::floor(y);
    case FamilyKind::Poisson:
    case FamilyKind::NegBin:
      return y >= 0.0 && y == std::floor(y);
  }
  return false;
}

double initial_predictor(const ExponentialFamily& fam, double y) {
  switch (fam.kind) {
    case FamilyKind::Gaussian:
      return sufficient_stat(fam, y);
    case FamilyKind::Bernoulli:
      return std::log((y + 0.5) / (1.5 - y));
    case FamilyKind::Binomial:
      return std::log((y + 0.5) / (fam.aux - y + 0.5));
    case FamilyKind::Poisson:
      return std::log(y + 0.5);
    case FamilyKind::NegBin: {
      const double mu = y + 0.5;
      if (fam.link == Link::Log) return std::log(mu);
      return std::log(mu / (fam.aux + mu));
    }
  }
  return 0.0;
}

namespace {

double phi_from_alpha(double alpha) { return 1.0 / std::clamp(alpha, kMinAlpha, kMaxAlpha); }

}  // namespace

double estimate_dispersion(const Eigen::Ref<const Eigen::VectorXd>& y, double mu_hat) {
  if (!(mu_hat > 0.0)) throw InvalidInput("dispersion estimate requires a positive mean");
  if (y.size() < 2) throw InvalidInput("dispersion estimate requires at least two samples");
  const double second_moment = (y.array() - mu_hat).square().mean();
  return phi_from_alpha((second_moment - mu_hat) / (mu_hat * mu_hat));
}

double estimate_dispersion(const Eigen::Ref<const Eigen::VectorXd>& y,
                           const Eigen::Ref<const Eigen::VectorXd>& mu_hat) {
  if (y.size() != mu_hat.size()) throw InvalidInput("dispersion estimate: size mismatch");
  if (y.size() < 2) throw InvalidInput("dispersion estimate requires at least two samples");
  if ((mu_hat.array() <= 0.0).any())
    throw InvalidInput("dispersion estimate requires positive means");
  const double ss = (y - mu_hat).squaredNorm();
  const double alpha = (ss - mu_hat.sum()) / mu_hat.squaredNorm();
  return phi_from_alpha(alpha);
}

}  // namespace gcate
