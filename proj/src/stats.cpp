#include "gcate/stats.hpp"

#include "gcate/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace gcate {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Acklam's rational approximation for the lower half, p in (0, 0.5].
double acklam_lower(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  if (p < 0.02425) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

std::uint64_t substream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const char ch : name) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed ^ h) + index);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (std::isnan(p) || p < 0.0 || p > 1.0) return std::numeric_limits<double>::quiet_NaN();
  if (p == 0.0) return -std::numeric_limits<double>::infinity();
  if (p == 1.0) return std::numeric_limits<double>::infinity();
  if (p > 0.5) return -normal_quantile(1.0 - p);
  double x = acklam_lower(p);
  // Two Halley refinements against the erfc-based CDF.
  for (int k = 0; k < 2; ++k) {
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

double two_sided_pvalue(double z) {
  if (std::isnan(z)) return std::numeric_limits<double>::quiet_NaN();
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

double median(const Eigen::Ref<const Eigen::VectorXd>& v) {
  std::vector<double> xs;
  xs.reserve(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isnan(v(i))) xs.push_back(v(i));
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = xs.size() / 2;
  std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
  const double upper = xs[mid];
  if (xs.size() % 2 == 1) return upper;
  const double lower = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double normalized_mad(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = median(v);
  return 1.4826 * median((v.array() - m).abs().matrix());
}

Eigen::VectorXd average_ranks(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const auto n = static_cast<std::size_t>(v.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return v(static_cast<Eigen::Index>(a)) < v(static_cast<Eigen::Index>(b));
  });
  Eigen::VectorXd ranks(v.size());
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v(static_cast<Eigen::Index>(order[j + 1])) ==
                            v(static_cast<Eigen::Index>(order[i])))
      ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks(static_cast<Eigen::Index>(order[k])) = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  std::vector<double> xa, xb;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::isfinite(a(i)) && std::isfinite(b(i))) {
      xa.push_back(a(i));
      xb.push_back(b(i));
    }
  if (xa.size() < 3) return std::numeric_limits<double>::quiet_NaN();
  const Eigen::Map<const Eigen::VectorXd> va(xa.data(), static_cast<Eigen::Index>(xa.size()));
  const Eigen::Map<const Eigen::VectorXd> vb(xb.data(), static_cast<Eigen::Index>(xb.size()));
  const Eigen::VectorXd ra = average_ranks(va).array() - 0.5 * (static_cast<double>(xa.size()) + 1);
  const Eigen::VectorXd rb = average_ranks(vb).array() - 0.5 * (static_cast<double>(xb.size()) + 1);
  const double denom = ra.norm() * rb.norm();
  return denom > 0 ? ra.dot(rb) / denom : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace gcate
