#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace adaptcar {

double normal_cdf(double x);
double normal_quantile(double p);

/// Normalised weights exp(lw - max) / sum. -inf entries get weight 0.
/// Throws NumericalError if every entry is -inf or NaN.
std::vector<double> normalize_log_weights(std::span<const double> log_weights);
double log_sum_exp(std::span<const double> values);

/// Finite mixture of normals.
struct NormalMixture {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> sds;

  double mean() const;
  double variance() const;
  double cdf(double x) const;
  double pdf(double x) const;
  /// Solves cdf(x) = p to an absolute CDF error below 1e-10 (x to ~1e-9).
  double quantile(double p) const;
};

/// Type-7 empirical quantile of `values` (copied and partially sorted).
double empirical_quantile(std::vector<double> values, double p);

/// Smallest support point whose cumulative weight reaches p.
double discrete_quantile(std::span<const double> values, std::span<const double> weights,
                         double p);

/// Nodes/weights for integrating f(x) exp(-x^2) (Golub-Welsch).
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
  explicit GaussHermite(int order);
  /// E[f(X)] for X ~ N(mean, sd^2).
  template <typename F>
  double expect(double mean, double sd, F&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      acc += weights[i] * f(mean + 1.4142135623730951 * sd * nodes[i]);
    return acc * 0.5641895835477563;  // 1/sqrt(pi)
  }
};
const GaussHermite& gauss_hermite20();

/// splitmix64 mix of (seed, stream): independent-looking derived seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace adaptcar
