#include "adaptcar/gmrf.hpp"

#include <cmath>
#include <numbers>

#include "adaptcar/errors.hpp"

namespace adaptcar {

LerouxPrecision build_precision(double rho, double tau, const NeighbourMatrix& w) {
  if (!(rho >= 0.0 && rho < 1.0))
    throw ModelError("Leroux precision: rho must lie in [0, 1), got " + std::to_string(rho));
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw ModelError("Leroux precision: tau must be positive, got " + std::to_string(tau));

  const Index n = w.size();
  const auto& g = w.graph();
  const auto sums = w.row_sums();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(n + 2 * w.active_count());
  for (Index k = 0; k < n; ++k)
    trip.emplace_back(k, k, tau * (rho * static_cast<double>(sums[k]) + 1.0 - rho));
  for (std::size_t id = 0; id < g.edge_count(); ++id) {
    if (!w.active(id)) continue;
    const Edge& e = g.edge(id);
    trip.emplace_back(e.a, e.b, -tau * rho);
    trip.emplace_back(e.b, e.a, -tau * rho);
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return LerouxPrecision{rho, tau, w, std::move(m)};
}

double partial_correlation(double rho, const NeighbourMatrix& w, Index k, Index j) {
  const double wkj = w.weight(k, j);
  if (wkj == 0.0) return 0.0;
  const double dk = rho * static_cast<double>(w.row_sum(k)) + 1.0 - rho;
  const double dj = rho * static_cast<double>(w.row_sum(j)) + 1.0 - rho;
  return rho * wkj / std::sqrt(dk * dj);
}

double log_density(const Vector& phi, const LerouxPrecision& q, const SparseFactor& factor) {
  const double n = static_cast<double>(phi.size());
  const double quad = phi.dot(q.matrix * phi);
  return 0.5 * factor.log_determinant() - 0.5 * n * std::log(2.0 * std::numbers::pi) -
         0.5 * quad;
}

double log_density(const Vector& phi, const LerouxPrecision& q) {
  return log_density(phi, q, SparseFactor::of(q.matrix));
}

Vector standard_normal(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> norm(0.0, 1.0);
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = norm(rng);
  return z;
}

Vector sample(const SparseFactor& factor, std::mt19937_64& rng) {
  return factor.transform_standard_normal(standard_normal(factor.size(), rng));
}

Vector sample(const LerouxPrecision& q, std::mt19937_64& rng) {
  return sample(SparseFactor::of(q.matrix), rng);
}

Conditional full_conditional(const Vector& phi, double rho, double tau,
                             const NeighbourMatrix& w, Index k) {
  const double denom = rho * static_cast<double>(w.row_sum(k)) + 1.0 - rho;
  if (!(denom > 0.0))
    throw ModelError("full conditional undefined at area " + std::to_string(k) +
                     ": no active neighbours with rho = 1");
  double s = 0.0;
  w.for_each_neighbour(k, [&](Index j) { s += phi[j]; });
  return {rho * s / denom, 1.0 / (tau * denom)};
}

}  // namespace adaptcar
