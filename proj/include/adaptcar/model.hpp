#pragma once

#include <string>
#include <vector>

#include "adaptcar/graph.hpp"
#include "adaptcar/sparse_factor.hpp"

namespace adaptcar {

enum class Family { Poisson, Binomial, Gaussian };

std::string to_string(Family family);
Family parse_family(const std::string& name);

/// Whether rho is integrated over or held at a value in [0, 1).
struct RhoMode {
  bool fixed = false;
  double value = 0.0;

  static RhoMode estimate() { return {}; }
  static RhoMode fixed_at(double v) { return {true, v}; }
  friend bool operator==(const RhoMode&, const RhoMode&) = default;
};

/// Parses "estimate" or "fixed:<v>".
RhoMode parse_rho_mode(const std::string& text);
std::string to_string(const RhoMode& mode);

/// Second parameters of the normal priors are variances; gammas are shape/rate.
struct Priors {
  double beta_variance = 1000.0;
  double tau_shape = 0.001;
  double tau_rate = 0.001;
  double sigma_shape = 0.001;
  double sigma_rate = 0.001;
  double logit_rho_variance = 100.0;
};

/// Hyperparameters of a single latent Gaussian model: rho, the random-effect
/// precision tau and (Gaussian family only) the observation precision sigma.
struct Hyper {
  double rho = 0.0;
  double tau = 1.0;
  double sigma = 1.0;
};

struct ModelSpec {
  Family family = Family::Poisson;
  Vector y;
  Vector offset;            // added to the linear predictor
  Vector trials;            // binomial only
  Matrix design;            // n x p, first column all ones
  std::vector<std::string> covariate_names;  // p names; defaults filled by validate()
  Priors priors;
  RhoMode rho_mode;
  bool random_effects = true;

  Index n() const { return static_cast<Index>(y.size()); }
  Index p() const { return static_cast<Index>(design.cols()); }
  /// Number of latent variables: n random effects (if present) then p betas.
  Index latent_size() const { return (random_effects ? n() : 0) + p(); }

  /// Throws ModelError naming the offending area or column.
  void validate() const;
};

/// Builds an intercept-only (plus optional covariate columns) Poisson spec.
ModelSpec poisson_spec(Vector y, Vector offset, Matrix covariates = Matrix());

// Per-area likelihood pieces as functions of the linear predictor eta.
struct LikelihoodTerm {
  double value = 0.0;     // log f(y | eta)
  double gradient = 0.0;  // d/d eta
  double curvature = 0.0; // -d^2/d eta^2, non-negative
};

LikelihoodTerm likelihood_term(Family family, double y, double trials, double eta,
                               double sigma);
double log_likelihood(Family family, double y, double trials, double eta, double sigma);
double inverse_link(Family family, double eta, double trials);
/// Var(Y | mean) used for Pearson residuals.
/// -2 * log likelihood of the whole response at linear predictor eta.
double deviance(const ModelSpec& spec, const Vector& eta, double sigma);

double response_variance(Family family, double mean, double trials, double sigma);

}  // namespace adaptcar
