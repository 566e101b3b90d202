#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adaptcar/gmrf.hpp"
#include "adaptcar/model.hpp"

namespace adaptcar {

/// Marginal posterior summary; lower/upper are the 2.5% and 97.5% quantiles.
struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  double median = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

Summary summarize_draws(const std::vector<double>& draws);

struct GridPoint {
  Hyper hyper;
  double log_evidence = 0.0;  // Laplace approximation of log p(y | hyper)
  double log_prior = 0.0;     // hyperprior on the (logit rho, log tau, log sigma) scale
  double log_weight = 0.0;    // log_evidence + log_prior; -inf for failed points
  double weight = 0.0;        // normalised over the grid
  bool ok = false;
  // Gaussian marginals of phi at this point (only kept for points carrying weight).
  std::vector<double> phi_mean;
  std::vector<double> phi_sd;
};

struct HyperGrid {
  std::vector<GridPoint> points;
  int stages = 1;

  /// Recomputes `weight` from `log_weight` with max-shifted log-sum-exp.
  void normalize();
  double total_weight() const;
};

struct FitResult {
  std::string backend;
  Family family = Family::Poisson;
  std::vector<std::string> beta_names;
  std::vector<Summary> beta;
  std::vector<Summary> phi;               // empty when the model has no random effects
  std::vector<Summary> linear_predictor;  // includes the offset
  std::vector<Summary> fitted;            // mu_k = g^{-1}(eta_k)
  std::vector<Summary> risk;              // exp(x_k' beta + phi_k); Poisson only
  std::optional<Summary> rho;
  std::optional<Summary> tau;
  std::optional<Summary> sigma;
  Vector pearson_residuals;
  double mean_deviance = 0.0;
  double p_d = 0.0;
  double dic = 0.0;
  HyperGrid grid;  // empty for MCMC fits

  Index n() const { return static_cast<Index>(fitted.size()); }
};

/// 95% marginal intervals of phi_k, one per area.
std::vector<std::pair<double, double>> credible_intervals_phi(const FitResult& result);

struct NewtonOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-6;
};

/// Latent vector layout: x = (phi_1..phi_n, beta_1..beta_p); phi is absent when
/// the spec has no random effects.
double log_joint(const ModelSpec& spec, const NeighbourMatrix& w, const Hyper& hyper,
                 const Vector& x);
Vector log_joint_gradient(const ModelSpec& spec, const NeighbourMatrix& w, const Hyper& hyper,
                          const Vector& x);
/// Negative Hessian of log_joint at x (the joint precision).
SparseMatrix joint_precision(const ModelSpec& spec, const NeighbourMatrix& w, const Hyper& hyper,
                             const Vector& x);

struct LatentMode {
  Vector x;
  SparseMatrix precision;  // negative Hessian at x
  int iterations = 0;
  double max_gradient = 0.0;
};

/// Newton iterations with backtracking on the sparse joint precision.
/// Throws NumericalError on non-convergence; ModelError when rho is at or above
/// 0.99 and some area has no active neighbour.
LatentMode latent_mode(const ModelSpec& spec, const NeighbourMatrix& w, const Hyper& hyper,
                       const NewtonOptions& options = {},
                       const std::optional<Vector>& start = std::nullopt);

struct LaplaceEvidence {
  double log_evidence = 0.0;
  double log_hyperprior = 0.0;
  double total() const { return log_evidence + log_hyperprior; }
};

LaplaceEvidence laplace_log_marginal(const ModelSpec& spec, const NeighbourMatrix& w,
                                     const Hyper& hyper);

/// Hyperprior log density on the integration scale: normal on logit rho
/// (when estimated), gamma on tau and sigma including the log-scale Jacobian.
double log_hyperprior(const ModelSpec& spec, const Hyper& hyper);

struct GridConfig {
  int rho_points = 15;
  int tau_points = 15;
  int sigma_points = 10;
  double logit_rho_min = -6.0;
  double logit_rho_max = 6.0;
  double log_tau_halfwidth = 4.0;
  double log_sigma_halfwidth = 4.0;
  /// Re-centred passes after the initial grid; each spans +-4 posterior sd of
  /// the previous pass (at least one previous spacing).
  int refinements = 2;
  int dic_samples = 1000;
  /// Points below this normalised weight are not used for marginals or DIC.
  double weight_floor = 1e-12;
  std::uint64_t seed = 20120901;
  unsigned threads = 1;
};

/// Laplace approximation on a hyperparameter grid; marginals are weighted
/// mixtures of the per-point Gaussians.
FitResult fit(const ModelSpec& spec, const NeighbourMatrix& w, const GridConfig& config = {});

double logit(double p);
double logistic(double x);

}  // namespace adaptcar
