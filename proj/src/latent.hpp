#pragma once

// Internal: sparse latent Gaussian system shared by the Laplace engine.

#include <map>
#include <optional>
#include <vector>

#include "adaptcar/inference.hpp"

namespace adaptcar::detail {

/// Assembles log-joint values, gradients and the joint precision of
/// (phi, beta) for one (spec, W) pair. The precision pattern is fixed, so a
/// single symbolic analysis serves every hyperparameter value.
class LatentSystem {
 public:
  LatentSystem(const ModelSpec& spec, const NeighbourMatrix& w);

  Index size() const { return nre_ + p_; }
  Index random_effects() const { return nre_; }
  const SparseMatrix& pattern() const { return pattern_; }
  const ModelSpec& spec() const { return spec_; }
  const NeighbourMatrix& w() const { return w_; }

  Vector eta(const Vector& x) const;
  /// Q(rho, W) phi without the tau factor.
  Vector q_times(double rho, const Vector& phi) const;

  /// log joint without the hyper-only normalising constants.
  double kernel(const Hyper& h, const Vector& x) const;
  /// Hyper-only constants of the log joint given log det Q(rho, W).
  double constants(const Hyper& h, double log_det_q) const;
  void gradient(const Hyper& h, const Vector& x, Vector& g) const;
  /// Writes the joint precision at x into `out` (pattern copied on first use).
  void precision(const Hyper& h, const Vector& x, SparseMatrix& out) const;

  Vector initial_point() const;

 private:
  const ModelSpec& spec_;
  const NeighbourMatrix& w_;
  Index n_, p_, nre_;
  std::vector<Index> row_sums_;
  SparseMatrix pattern_;
  std::vector<int> diag_pos_;                 // latent i -> value index of (i, i)
  std::vector<std::array<int, 2>> edge_pos_;  // active edge -> (a,b), (b,a)
  std::vector<Edge> active_edges_;
  std::vector<int> phi_beta_pos_;             // (k * p + j) -> (phi_k, beta_j); +1 block for transpose
  std::vector<int> beta_phi_pos_;
  std::vector<int> beta_beta_pos_;            // (i * p + j)
};

/// log det Q(rho, W) with one symbolic analysis per W. Not thread-safe.
class LerouxLogDet {
 public:
  explicit LerouxLogDet(const NeighbourMatrix& w);
  double operator()(double rho);

 private:
  const NeighbourMatrix& w_;
  std::optional<SparseCholesky> chol_;
  std::map<double, double> cache_;
};

struct ModeResult {
  Vector x;
  SparseMatrix precision;
  std::optional<SparseFactor> factor;
  int iterations = 0;
  double max_gradient = 0.0;
  double kernel = 0.0;
};

ModeResult find_mode(const LatentSystem& sys, const Hyper& h, SparseCholesky& chol,
                     const NewtonOptions& options, Vector x);

}  // namespace adaptcar::detail
