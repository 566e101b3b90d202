#include "adaptcar/numeric.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>

#include "adaptcar/errors.hpp"

namespace adaptcar {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

double log_sum_exp(std::span<const double> values) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : values)
    if (v > mx) mx = v;
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s);
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : log_weights)
    if (v > mx) mx = v;
  if (!std::isfinite(mx))
    throw NumericalError("grid weights: no point has a finite log weight");
  std::vector<double> w(log_weights.size());
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::isnan(log_weights[i]) ? 0.0 : std::exp(log_weights[i] - mx);
    s += w[i];
  }
  if (!(s > 0.0)) throw NumericalError("grid weights: total weight underflowed");
  for (double& v : w) v /= s;
  return w;
}

double NormalMixture::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) m += weights[i] * means[i];
  return m;
}

double NormalMixture::variance() const {
  const double m = mean();
  double v = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double d = means[i] - m;
    v += weights[i] * (sds[i] * sds[i] + d * d);
  }
  return v;
}

double NormalMixture::cdf(double x) const {
  double c = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (sds[i] > 0.0)
      c += weights[i] * normal_cdf((x - means[i]) / sds[i]);
    else
      c += x >= means[i] ? weights[i] : 0.0;
  }
  return c;
}

double NormalMixture::pdf(double x) const {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  double d = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(sds[i] > 0.0)) continue;
    const double z = (x - means[i]) / sds[i];
    d += weights[i] * kInvSqrt2Pi * std::exp(-0.5 * z * z) / sds[i];
  }
  return d;
}

double NormalMixture::quantile(double p) const {
  if (weights.size() == 1 && sds[0] > 0.0) return means[0] + sds[0] * normal_quantile(p);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  const double z = std::abs(normal_quantile(std::min(p, 1.0 - p))) + 1.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    lo = std::min(lo, means[i] - z * sds[i]);
    hi = std::max(hi, means[i] + z * sds[i]);
  }
  // Safeguarded Newton: bisection keeps the bracket, Newton accelerates.
  double x = mean();
  if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = cdf(x) - p;
    if (std::abs(f) < 1e-12 || hi - lo < 1e-12 * (1.0 + std::abs(x))) break;
    if (f > 0) hi = x; else lo = x;
    const double d = pdf(x);
    double next = d > 0 ? x - f / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  return x;
}

double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + lo, values.end());
  const double a = values[lo];
  if (hi == lo) return a;
  const double b = *std::min_element(values.begin() + lo + 1, values.end());
  return a + (h - static_cast<double>(lo)) * (b - a);
}

double discrete_quantile(std::span<const double> values, std::span<const double> weights,
                         double p) {
  std::vector<std::size_t> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double c = 0.0;
  for (std::size_t i : order) {
    c += weights[i];
    if (c >= p - 1e-12) return values[i];
  }
  return values[order.back()];
}

GaussHermite::GaussHermite(int order) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int i = 1; i < order; ++i) {
    const double b = std::sqrt(i / 2.0);
    jacobi(i, i - 1) = b;
    jacobi(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  const double sqrt_pi = 1.7724538509055159;
  for (int i = 0; i < order; ++i) {
    nodes.push_back(es.eigenvalues()[i]);
    const double v = es.eigenvectors()(0, i);
    weights.push_back(sqrt_pi * v * v);
  }
}

const GaussHermite& gauss_hermite20() {
  static const GaussHermite gh(20);
  return gh;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace adaptcar
