#pragma once

#include <random>

#include "adaptcar/graph.hpp"
#include "adaptcar/sparse_factor.hpp"

namespace adaptcar {

/// tau * Q(rho, W) with Q = rho (diag(w_k+) - W) + (1 - rho) I.
struct LerouxPrecision {
  double rho = 0.0;
  double tau = 1.0;
  NeighbourMatrix w;
  SparseMatrix matrix;  // full symmetric storage, pattern = diagonal + active edges
};

/// Throws ModelError unless 0 <= rho < 1 and tau > 0.
LerouxPrecision build_precision(double rho, double tau, const NeighbourMatrix& w);

/// Conditional correlation of (phi_k, phi_j) given all other random effects.
double partial_correlation(double rho, const NeighbourMatrix& w, Index k, Index j);

/// log N(phi; 0, (tau Q)^{-1}).
double log_density(const Vector& phi, const LerouxPrecision& q);
double log_density(const Vector& phi, const LerouxPrecision& q, const SparseFactor& factor);

/// Draw from N(0, (tau Q)^{-1}).
Vector sample(const LerouxPrecision& q, std::mt19937_64& rng);
Vector sample(const SparseFactor& factor, std::mt19937_64& rng);

struct Conditional {
  double mean = 0.0;
  double variance = 0.0;
};

/// Full conditional of phi_k given the rest. Throws ModelError when
/// rho * w_k+ + 1 - rho <= 0 (rho = 1 at an area without active neighbours).
Conditional full_conditional(const Vector& phi, double rho, double tau,
                             const NeighbourMatrix& w, Index k);

/// Standard normal vector of length n.
Vector standard_normal(Eigen::Index n, std::mt19937_64& rng);

}  // namespace adaptcar
