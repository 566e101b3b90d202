#pragma once

// Test-only helpers: random geographies and dense reference computations that
// stay independent of the sparse code paths under test.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "adaptcar/graph.hpp"

namespace adaptcar::testing {

inline GraphPtr random_graph(Index n, double edge_prob, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(edge_prob);
  std::vector<Edge> edges;
  for (Index k = 0; k < n; ++k)
    for (Index j = k + 1; j < n; ++j)
      if (coin(rng)) edges.emplace_back(k, j);
  return std::make_shared<const AdjacencyGraph>(n, edges);
}

inline NeighbourMatrix random_w(const GraphPtr& g, double active_prob, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(active_prob);
  std::vector<std::uint8_t> flags(g->edge_count());
  for (auto& f : flags) f = coin(rng) ? 1 : 0;
  return NeighbourMatrix(g, flags);
}

inline Eigen::MatrixXd dense_w(const NeighbourMatrix& w) {
  const Index n = w.size();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Index k = 0; k < n; ++k)
    for (Index j = 0; j < n; ++j)
      if (k != j) m(k, j) = w.weight(k, j);
  return m;
}

/// tau * [rho (diag(rowsums) - W) + (1 - rho) I], built densely.
inline Eigen::MatrixXd dense_leroux(double rho, double tau, const NeighbourMatrix& w) {
  const Eigen::MatrixXd wm = dense_w(w);
  const Index n = w.size();
  Eigen::MatrixXd d = wm.rowwise().sum().asDiagonal();
  return tau * (rho * (d - wm) + (1.0 - rho) * Eigen::MatrixXd::Identity(n, n));
}

/// log N(x; mean, precision^{-1}) via a dense Cholesky.
inline double dense_mvn_logpdf_precision(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                         const Eigen::MatrixXd& precision) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  const Eigen::MatrixXd L = llt.matrixL();
  double logdet = 0.0;
  for (Index i = 0; i < L.rows(); ++i) logdet += 2.0 * std::log(L(i, i));
  const Eigen::VectorXd d = x - mean;
  return 0.5 * logdet - 0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) -
         0.5 * d.dot(precision * d);
}

inline double dense_mvn_logpdf_covariance(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                          const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::MatrixXd L = llt.matrixL();
  double logdet = 0.0;
  for (Index i = 0; i < L.rows(); ++i) logdet += 2.0 * std::log(L(i, i));
  const Eigen::VectorXd d = x - mean;
  const Eigen::VectorXd s = llt.solve(d);
  return -0.5 * logdet - 0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) -
         0.5 * d.dot(s);
}

}  // namespace adaptcar::testing
