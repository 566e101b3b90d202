#include "adaptcar/mcmc.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>

#include "adaptcar/errors.hpp"

namespace adaptcar {

void McmcConfig::validate() const {
  if (iterations <= 0) throw ModelError("mcmc: iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations)
    throw ModelError("mcmc: burn-in must lie in [0, iterations)");
  if (thin < 1) throw ModelError("mcmc: thin must be at least 1");
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
    throw ModelError("mcmc: target acceptance must lie in (0, 1)");
  if (!(logit_rho_min < logit_rho_max)) throw ModelError("mcmc: empty logit rho range");
}

namespace {

// Random-walk proposal scale with batch adaptation on the log scale.
struct Scale {
  double log_s = std::log(0.5);
  int tried = 0;
  int accepted = 0;

  double value() const { return std::exp(log_s); }
  void record(bool ok) {
    ++tried;
    accepted += ok;
  }
  void adapt(int batch, double target) {
    if (tried == 0) return;
    const double delta = std::min(0.1, 1.0 / std::sqrt(static_cast<double>(batch)));
    log_s += static_cast<double>(accepted) / tried > target ? delta : -delta;
    tried = accepted = 0;
  }
};

double log_gamma_kernel(double v, double shape, double rate) {
  return (shape - 1.0) * std::log(v) - rate * v;
}

class Sampler {
 public:
  Sampler(const ModelSpec& spec, const NeighbourMatrix& w, const McmcConfig& cfg)
      : spec_(spec), w_(w), cfg_(cfg), rng_(cfg.seed), n_(spec.n()), p_(spec.p()),
        re_(spec.random_effects) {
    const Matrix& X = spec_.design;
    beta_ = Vector::Zero(p_);
    double expo = 0.0;
    switch (spec_.family) {
      case Family::Poisson:
        for (Index k = 0; k < n_; ++k) expo += std::exp(spec_.offset[k]);
        beta_[0] = std::log((spec_.y.sum() + 0.5) / expo);
        break;
      case Family::Binomial: {
        const double pr = (spec_.y.sum() + 0.5) / (spec_.trials.sum() + 1.0);
        beta_[0] = logit(pr) - spec_.offset.mean();
        break;
      }
      case Family::Gaussian:
        beta_[0] = (spec_.y - spec_.offset).mean();
        break;
    }
    phi_ = Vector::Zero(re_ ? n_ : 0);
    eta_ = spec_.offset + X * beta_;
    trials_ = Vector::Zero(n_);
    if (spec_.family == Family::Binomial) trials_ = spec_.trials;
    rho_ = spec_.rho_mode.fixed
               ? spec_.rho_mode.value
               : logistic(std::clamp(0.0, cfg_.logit_rho_min, cfg_.logit_rho_max));
    tau_ = 1.0;
    sigma_ = 1.0;
    if (spec_.family == Family::Gaussian) {
      const double v = (spec_.y - eta_).squaredNorm() / static_cast<double>(n_);
      sigma_ = 1.0 / std::max(v, 1e-8);
    }
    if (re_) {
      row_sums_.resize(n_);
      for (Index k = 0; k < n_; ++k) row_sums_[k] = static_cast<double>(w_.row_sum(k));
      for (std::size_t e = 0; e < w_.graph().edge_count(); ++e)
        if (w_.active(e)) active_.push_back(w_.graph().edge(e));
      if (!spec_.rho_mode.fixed) {
        // log det Q(rho) = sum log(rho lambda_i + 1 - rho) over eigenvalues of D - W.
        Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n_, n_);
        for (Index k = 0; k < n_; ++k) lap(k, k) = row_sums_[k];
        for (const Edge& e : active_) lap(e.a, e.b) = lap(e.b, e.a) = -1.0;
        lambda_ = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(lap, Eigen::EigenvaluesOnly)
                      .eigenvalues();
      }
      phi_scale_.resize(n_);
    }
    beta_scale_.resize(p_);
    for (auto& s : beta_scale_) s.log_s = std::log(0.1);
  }

  FitResult run();

 private:
  double loglik(Index k, double eta) const {
    return log_likelihood(spec_.family, spec_.y[k], trials_[k], eta, sigma_);
  }
  double total_loglik(const Vector& eta) const {
    double v = 0.0;
    for (Index k = 0; k < n_; ++k) v += loglik(k, eta[k]);
    return v;
  }
  bool accept(double log_ratio) { return std::log(unif_(rng_)) < log_ratio; }

  // phi' Q(rho) phi split as rho * edge part + (1 - rho) * phi' phi.
  double edge_form(const Vector& phi) const {
    double s = 0.0;
    for (const Edge& e : active_) {
      const double d = phi[e.a] - phi[e.b];
      s += d * d;
    }
    return s;
  }
  double quad_form(double rho, const Vector& phi) const {
    return rho * edge_form(phi) + (1.0 - rho) * phi.squaredNorm();
  }
  double log_det_q(double rho) const {
    double s = 0.0;
    for (Index i = 0; i < lambda_.size(); ++i) s += std::log(rho * lambda_[i] + 1.0 - rho);
    return s;
  }

  void update_phi();
  void update_beta();
  void shift_level();
  void scale_phi_tau();
  void update_tau();
  void update_rho();
  void update_sigma();

  const ModelSpec& spec_;
  const NeighbourMatrix& w_;
  McmcConfig cfg_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> norm_{0.0, 1.0};
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  Index n_, p_;
  bool re_;
  Vector beta_, phi_, eta_, trials_, row_sums_, lambda_;
  std::vector<Edge> active_;
  double rho_, tau_, sigma_;
  std::vector<Scale> phi_scale_, beta_scale_;
  Scale shift_scale_, tau_scale_, rho_scale_;
};

void Sampler::update_phi() {
  for (Index k = 0; k < n_; ++k) {
    double nsum = 0.0;
    w_.for_each_neighbour(k, [&](Index j) { nsum += phi_[j]; });
    const double qkk = rho_ * row_sums_[k] + 1.0 - rho_;
    const double old = phi_[k];
    const double prop = old + phi_scale_[k].value() * norm_(rng_);
    const double d_eta = prop - old;
    // -tau/2 [qkk (x'^2 - x^2) - 2 rho (x' - x) sum_j phi_j]
    const double d_prior =
        -0.5 * tau_ * (qkk * (prop * prop - old * old) - 2.0 * rho_ * d_eta * nsum);
    const double d_lik = loglik(k, eta_[k] + d_eta) - loglik(k, eta_[k]);
    const bool ok = accept(d_lik + d_prior);
    if (ok) {
      phi_[k] = prop;
      eta_[k] += d_eta;
    }
    phi_scale_[k].record(ok);
  }
}

void Sampler::update_beta() {
  const Matrix& X = spec_.design;
  const double v = spec_.priors.beta_variance;
  for (Index j = 0; j < p_; ++j) {
    const double d = beta_scale_[j].value() * norm_(rng_);
    const Vector eta_new = eta_ + d * X.col(j);
    const double b = beta_[j];
    const double d_prior = -0.5 * ((b + d) * (b + d) - b * b) / v;
    const bool ok = accept(total_loglik(eta_new) - total_loglik(eta_) + d_prior);
    if (ok) {
      beta_[j] += d;
      eta_ = eta_new;
    }
    beta_scale_[j].record(ok);
  }
}

// (beta_0 + d, phi - d) leaves eta unchanged; only the priors move.
void Sampler::shift_level() {
  const double d = shift_scale_.value() * norm_(rng_);
  const double nn = static_cast<double>(n_);
  // 1'Q = (1 - rho) 1', so the phi prior change needs only sum(phi).
  const double d_phi = -0.5 * tau_ * (1.0 - rho_) * (-2.0 * d * phi_.sum() + d * d * nn);
  const double b = beta_[0];
  const double d_beta = -0.5 * ((b + d) * (b + d) - b * b) / spec_.priors.beta_variance;
  const bool ok = accept(d_phi + d_beta);
  if (ok) {
    beta_[0] += d;
    phi_.array() -= d;
  }
  shift_scale_.record(ok);
}

// (c phi, tau / c^2): the phi prior is invariant, leaving the likelihood, the
// tau prior and a Jacobian factor c^-2.
void Sampler::scale_phi_tau() {
  const double lc = tau_scale_.value() * norm_(rng_);
  const double c = std::exp(lc);
  const Vector eta_new = eta_ + (c - 1.0) * phi_;
  const double tau_new = tau_ / (c * c);
  const auto& pr = spec_.priors;
  const double r = total_loglik(eta_new) - total_loglik(eta_) +
                   log_gamma_kernel(tau_new, pr.tau_shape, pr.tau_rate) -
                   log_gamma_kernel(tau_, pr.tau_shape, pr.tau_rate) - 2.0 * lc;
  const bool ok = accept(r);
  if (ok) {
    phi_ *= c;
    eta_ = eta_new;
    tau_ = tau_new;
  }
  tau_scale_.record(ok);
}

void Sampler::update_tau() {
  const auto& pr = spec_.priors;
  const double shape = pr.tau_shape + 0.5 * static_cast<double>(n_);
  const double rate = pr.tau_rate + 0.5 * quad_form(rho_, phi_);
  tau_ = std::gamma_distribution<double>(shape, 1.0 / rate)(rng_);
}

void Sampler::update_rho() {
  const double lr = logit(rho_);
  const double lp = lr + rho_scale_.value() * norm_(rng_);
  const double prop = logistic(lp);
  const double v = spec_.priors.logit_rho_variance;
  bool ok = false;
  if (lp >= cfg_.logit_rho_min && lp <= cfg_.logit_rho_max) {
    const double ef = edge_form(phi_), ss = phi_.squaredNorm();
    auto target = [&](double rho, double l) {
      return 0.5 * log_det_q(rho) - 0.5 * tau_ * (rho * ef + (1.0 - rho) * ss) - 0.5 * l * l / v;
    };
    ok = accept(target(prop, lp) - target(rho_, lr));
  }
  if (ok) rho_ = prop;
  rho_scale_.record(ok);
}

void Sampler::update_sigma() {
  const auto& pr = spec_.priors;
  const double shape = pr.sigma_shape + 0.5 * static_cast<double>(n_);
  const double rate = pr.sigma_rate + 0.5 * (spec_.y - eta_).squaredNorm();
  sigma_ = std::gamma_distribution<double>(shape, 1.0 / rate)(rng_);
}

FitResult Sampler::run() {
  const bool gaussian = spec_.family == Family::Gaussian;
  const bool rho_free = re_ && !spec_.rho_mode.fixed;
  const int kept = (cfg_.iterations - cfg_.burn_in) / cfg_.thin;
  std::vector<std::vector<double>> phi_d(re_ ? n_ : 0), eta_d(n_), beta_d(p_);
  std::vector<double> rho_d, tau_d, sigma_d;
  for (auto* v : {&phi_d, &eta_d, &beta_d})
    for (auto& d : *v) d.reserve(kept);
  Vector phi_sum = Vector::Zero(phi_.size()), beta_sum = Vector::Zero(p_);
  double dev_sum = 0.0, log_sigma_sum = 0.0;
  int stored = 0;

  constexpr int kBatch = 50;
  for (int it = 0; it < cfg_.iterations; ++it) {
    if (re_) {
      update_phi();
      shift_level();
      scale_phi_tau();
      update_tau();
      if (rho_free) update_rho();
    }
    update_beta();
    if (gaussian) update_sigma();

    if (it < cfg_.burn_in && (it + 1) % kBatch == 0) {
      const int batch = (it + 1) / kBatch;
      const double t = cfg_.target_acceptance;
      for (auto& s : phi_scale_) s.adapt(batch, t);
      for (auto& s : beta_scale_) s.adapt(batch, t);
      shift_scale_.adapt(batch, t);
      tau_scale_.adapt(batch, t);
      rho_scale_.adapt(batch, t);
    }
    if (it >= cfg_.burn_in && (it - cfg_.burn_in) % cfg_.thin == 0) {
      // Same centred reporting as the Laplace backend.
      const double level = re_ ? phi_.mean() : 0.0;
      for (Index k = 0; k < phi_.size(); ++k) phi_d[k].push_back(phi_[k] - level);
      for (Index k = 0; k < n_; ++k) eta_d[k].push_back(eta_[k]);
      for (Index j = 0; j < p_; ++j) beta_d[j].push_back(beta_[j] + (j == 0 ? level : 0.0));
      if (re_) {
        rho_d.push_back(rho_);
        tau_d.push_back(tau_);
      }
      if (gaussian) sigma_d.push_back(sigma_);
      phi_sum += phi_;
      beta_sum += beta_;
      dev_sum += deviance(spec_, eta_, sigma_);
      log_sigma_sum += std::log(sigma_);
      ++stored;
    }
  }

  FitResult res;
  res.backend = "mcmc";
  res.family = spec_.family;
  res.beta_names = spec_.covariate_names;
  if (res.beta_names.empty())
    for (Index j = 0; j < p_; ++j) res.beta_names.push_back(j == 0 ? "intercept" : "x" + std::to_string(j));
  for (Index j = 0; j < p_; ++j) res.beta.push_back(summarize_draws(beta_d[j]));
  for (Index k = 0; k < phi_.size(); ++k) res.phi.push_back(summarize_draws(phi_d[k]));
  const bool poisson = spec_.family == Family::Poisson;
  for (Index k = 0; k < n_; ++k) {
    res.linear_predictor.push_back(summarize_draws(eta_d[k]));
    std::vector<double> mu(eta_d[k].size()), risk;
    for (std::size_t s = 0; s < mu.size(); ++s)
      mu[s] = inverse_link(spec_.family, eta_d[k][s], trials_[k]);
    res.fitted.push_back(summarize_draws(mu));
    if (poisson) {
      risk.resize(mu.size());
      for (std::size_t s = 0; s < mu.size(); ++s) risk[s] = std::exp(eta_d[k][s] - spec_.offset[k]);
      res.risk.push_back(summarize_draws(risk));
    }
  }
  if (re_) {
    res.rho = summarize_draws(rho_d);
    res.tau = summarize_draws(tau_d);
  }
  if (gaussian) res.sigma = summarize_draws(sigma_d);

  const double sigma_hat = res.sigma ? res.sigma->median : 1.0;
  res.pearson_residuals.resize(n_);
  for (Index k = 0; k < n_; ++k) {
    const double mu = res.fitted[k].median;
    res.pearson_residuals[k] =
        (spec_.y[k] - mu) / std::sqrt(response_variance(spec_.family, mu, trials_[k], sigma_hat));
  }

  const double m = static_cast<double>(stored);
  Vector eta_bar = spec_.offset + spec_.design * (beta_sum / m);
  if (re_) eta_bar += phi_sum / m;
  res.mean_deviance = dev_sum / m;
  res.p_d = res.mean_deviance - deviance(spec_, eta_bar, std::exp(log_sigma_sum / m));
  res.dic = res.mean_deviance + res.p_d;
  return res;
}

}  // namespace

FitResult fit_mcmc(const ModelSpec& spec, const NeighbourMatrix& w, const McmcConfig& config) {
  spec.validate();
  config.validate();
  if (spec.random_effects && w.size() != spec.n())
    throw ModelError("neighbour matrix has " + std::to_string(w.size()) + " areas, data has " +
                     std::to_string(spec.n()));
  if (spec.random_effects && spec.rho_mode.fixed && spec.rho_mode.value >= 0.99) {
    auto isolated = w.isolated_areas();
    if (!isolated.empty())
      throw ModelError("area " + std::to_string(isolated.front()) +
                       " has no active neighbours; rho fixed near one leaves its full "
                       "conditional undefined");
  }
  Sampler sampler(spec, w, config);
  return sampler.run();
}

}  // namespace adaptcar
