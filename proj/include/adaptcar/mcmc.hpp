#pragma once

#include <cstdint>

#include "adaptcar/inference.hpp"

namespace adaptcar {

struct McmcConfig {
  int iterations = 20000;
  int burn_in = 10000;
  int thin = 1;
  std::uint64_t seed = 20120901;
  /// Random-walk scales adapt toward this acceptance rate during burn-in only.
  double target_acceptance = 0.4;
  /// Support of logit rho; matches the Laplace grid so both backends target
  /// the same posterior.
  double logit_rho_min = -6.0;
  double logit_rho_max = 6.0;

  void validate() const;
};

/// Metropolis-within-Gibbs oracle for the same model as fit(): single-site
/// random walks on phi and beta, a level shift between intercept and phi, a
/// joint (phi, tau) scale move, Gibbs draws for tau and sigma, and a random
/// walk on logit rho when estimated. Deterministic given the seed.
FitResult fit_mcmc(const ModelSpec& spec, const NeighbourMatrix& w, const McmcConfig& config = {});

}  // namespace adaptcar
