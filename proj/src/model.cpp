#include "adaptcar/model.hpp"

#include <cmath>
#include <numbers>

#include "adaptcar/errors.hpp"

namespace adaptcar {

std::string to_string(Family family) {
  switch (family) {
    case Family::Poisson: return "poisson";
    case Family::Binomial: return "binomial";
    case Family::Gaussian: return "gaussian";
  }
  return "?";
}

Family parse_family(const std::string& name) {
  if (name == "poisson") return Family::Poisson;
  if (name == "binomial") return Family::Binomial;
  if (name == "gaussian") return Family::Gaussian;
  throw ModelError("unknown family '" + name + "' (expected poisson, binomial or gaussian)");
}

RhoMode parse_rho_mode(const std::string& text) {
  if (text == "estimate") return RhoMode::estimate();
  const std::string prefix = "fixed:";
  if (text.rfind(prefix, 0) == 0) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text.substr(prefix.size()), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size() - prefix.size())
      throw ModelError("malformed rho mode '" + text + "'");
    if (!(v >= 0.0 && v < 1.0)) throw ModelError("fixed rho must lie in [0, 1)");
    return RhoMode::fixed_at(v);
  }
  throw ModelError("rho mode must be 'estimate' or 'fixed:<v>', got '" + text + "'");
}

std::string to_string(const RhoMode& mode) {
  if (!mode.fixed) return "estimate";
  char buf[64];
  std::snprintf(buf, sizeof buf, "fixed:%.17g", mode.value);
  return buf;
}

void ModelSpec::validate() const {
  const Index n = this->n();
  if (n == 0) throw ModelError("model: no areas");
  if (offset.size() != n)
    throw ModelError("model: offset length " + std::to_string(offset.size()) +
                     " does not match " + std::to_string(n) + " responses");
  if (design.rows() != n)
    throw ModelError("model: design has " + std::to_string(design.rows()) + " rows, expected " +
                     std::to_string(n));
  if (design.cols() < 1) throw ModelError("model: design needs an intercept column");
  for (Index k = 0; k < n; ++k)
    if (design(k, 0) != 1.0)
      throw ModelError("model: first design column must be all ones (area " +
                       std::to_string(k) + ")");
  if (!design.allFinite()) throw ModelError("model: design contains non-finite values");
  if (!offset.allFinite()) throw ModelError("model: offset contains non-finite values");
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (qr.rank() < design.cols()) throw ModelError("model: design is not of full column rank");
  if (!covariate_names.empty() && static_cast<Index>(covariate_names.size()) != design.cols())
    throw ModelError("model: covariate name count does not match design columns");

  for (Index k = 0; k < n; ++k) {
    const double v = y[k];
    if (!std::isfinite(v)) throw ModelError("model: non-finite response at area " + std::to_string(k));
    switch (family) {
      case Family::Poisson:
        if (v < 0.0 || v != std::floor(v))
          throw ModelError("model: Poisson response at area " + std::to_string(k) +
                           " must be a non-negative integer");
        break;
      case Family::Binomial:
        if (trials.size() != n) throw ModelError("model: binomial family needs per-area trials");
        if (v < 0.0 || v != std::floor(v) || trials[k] != std::floor(trials[k]) || trials[k] < 1)
          throw ModelError("model: binomial counts at area " + std::to_string(k) +
                           " must be integers with trials >= 1");
        if (trials[k] < v)
          throw ModelError("model: trials < y at area " + std::to_string(k));
        break;
      case Family::Gaussian:
        break;
    }
  }
  if (rho_mode.fixed && !(rho_mode.value >= 0.0 && rho_mode.value < 1.0))
    throw ModelError("model: fixed rho must lie in [0, 1)");
  const auto& pr = priors;
  if (!(pr.beta_variance > 0 && pr.tau_shape > 0 && pr.tau_rate > 0 && pr.sigma_shape > 0 &&
        pr.sigma_rate > 0 && pr.logit_rho_variance > 0))
    throw ModelError("model: prior parameters must be positive");
}

ModelSpec poisson_spec(Vector y, Vector offset, Matrix covariates) {
  ModelSpec spec;
  spec.family = Family::Poisson;
  const Index n = y.size();
  spec.y = std::move(y);
  spec.offset = std::move(offset);
  const Index extra = covariates.size() == 0 ? 0 : covariates.cols();
  spec.design = Matrix::Ones(n, 1 + extra);
  if (extra > 0) spec.design.rightCols(extra) = covariates;
  return spec;
}

namespace {

double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

LikelihoodTerm likelihood_term(Family family, double y, double trials, double eta, double sigma) {
  LikelihoodTerm t;
  switch (family) {
    case Family::Poisson: {
      const double mu = std::exp(eta);
      t.value = y * eta - mu - std::lgamma(y + 1.0);
      t.gradient = y - mu;
      t.curvature = mu;
      break;
    }
    case Family::Binomial: {
      const double p = 1.0 / (1.0 + std::exp(-eta));
      t.value = y * eta - trials * log1p_exp(eta) + std::lgamma(trials + 1.0) -
                std::lgamma(y + 1.0) - std::lgamma(trials - y + 1.0);
      t.gradient = y - trials * p;
      t.curvature = trials * p * (1.0 - p);
      break;
    }
    case Family::Gaussian: {
      const double r = y - eta;
      t.value = 0.5 * std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * sigma * r * r;
      t.gradient = sigma * r;
      t.curvature = sigma;
      break;
    }
  }
  return t;
}

double log_likelihood(Family family, double y, double trials, double eta, double sigma) {
  return likelihood_term(family, y, trials, eta, sigma).value;
}

double inverse_link(Family family, double eta, double trials) {
  switch (family) {
    case Family::Poisson: return std::exp(eta);
    case Family::Binomial: return trials / (1.0 + std::exp(-eta));
    case Family::Gaussian: return eta;
  }
  return eta;
}

double deviance(const ModelSpec& spec, const Vector& eta, double sigma) {
  double d = 0.0;
  for (Index k = 0; k < spec.n(); ++k) {
    const double trials = spec.family == Family::Binomial ? spec.trials[k] : 0.0;
    d += log_likelihood(spec.family, spec.y[k], trials, eta[k], sigma);
  }
  return -2.0 * d;
}

double response_variance(Family family, double mean, double trials, double sigma) {
  switch (family) {
    case Family::Poisson: return mean;
    case Family::Binomial: {
      const double p = mean / trials;
      return trials * p * (1.0 - p);
    }
    case Family::Gaussian: return 1.0 / sigma;
  }
  return 1.0;
}

}  // namespace adaptcar
