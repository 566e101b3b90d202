#include "adaptcar/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "adaptcar/errors.hpp"
#include "adaptcar/numeric.hpp"
#include "adaptcar/parallel.hpp"
#include "latent.hpp"

namespace adaptcar {

using detail::LatentSystem;
using detail::LerouxLogDet;

double logit(double p) { return std::log(p / (1.0 - p)); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Summary summarize_draws(const std::vector<double>& draws) {
  Summary s;
  const double n = static_cast<double>(draws.size());
  if (draws.empty()) return s;
  double m = 0.0;
  for (double d : draws) m += d;
  m /= n;
  double v = 0.0;
  for (double d : draws) v += (d - m) * (d - m);
  s.mean = m;
  s.sd = draws.size() > 1 ? std::sqrt(v / (n - 1.0)) : 0.0;
  s.median = empirical_quantile(draws, 0.5);
  s.lower = empirical_quantile(draws, 0.025);
  s.upper = empirical_quantile(draws, 0.975);
  return s;
}

void HyperGrid::normalize() {
  std::vector<double> lw;
  lw.reserve(points.size());
  for (const auto& p : points) lw.push_back(p.log_weight);
  const auto w = normalize_log_weights(lw);
  for (std::size_t i = 0; i < points.size(); ++i) points[i].weight = w[i];
}

double HyperGrid::total_weight() const {
  double s = 0.0;
  for (const auto& p : points) s += p.weight;
  return s;
}

std::vector<std::pair<double, double>> credible_intervals_phi(const FitResult& result) {
  std::vector<std::pair<double, double>> out;
  out.reserve(result.phi.size());
  for (const auto& s : result.phi) out.emplace_back(s.lower, s.upper);
  return out;
}

namespace {

void check_isolation(const ModelSpec& spec, const NeighbourMatrix& w, double rho) {
  if (!spec.random_effects || rho < 0.99) return;
  auto isolated = w.isolated_areas();
  if (!isolated.empty())
    throw ModelError("area " + std::to_string(isolated.front()) +
                     " has no active neighbours; rho fixed near one leaves its full "
                     "conditional undefined");
}

void check_hyper(const ModelSpec& spec, const Hyper& h) {
  if (spec.random_effects) {
    if (!(h.rho >= 0.0 && h.rho < 1.0)) throw ModelError("rho must lie in [0, 1)");
    if (!(h.tau > 0.0)) throw ModelError("tau must be positive");
  }
  if (spec.family == Family::Gaussian && !(h.sigma > 0.0))
    throw ModelError("sigma must be positive");
}

double log_gamma_on_log_scale(double value, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + shape * std::log(value) - rate * value;
}

}  // namespace

double log_joint(const ModelSpec& spec, const NeighbourMatrix& w, const Hyper& hyper,
                 const Vector& x) {
  LatentSystem sys(spec, w);
  LerouxLogDet logdet(w);
  const double ldq = spec.random_effects ? logdet(hyper.rho) : 0.0;
  return sys.kernel(hyper, x) + sys.constants(hyper, ldq);
}

Vector log_joint_gradient(const ModelSpec& spec, const NeighbourMatrix& w, const Hyper& hyper,
                          const Vector& x) {
  LatentSystem sys(spec, w);
  Vector g;
  sys.gradient(hyper, x, g);
  return g;
}

SparseMatrix joint_precision(const ModelSpec& spec, const NeighbourMatrix& w, const Hyper& hyper,
                             const Vector& x) {
  LatentSystem sys(spec, w);
  SparseMatrix h;
  sys.precision(hyper, x, h);
  return h;
}

LatentMode latent_mode(const ModelSpec& spec, const NeighbourMatrix& w, const Hyper& hyper,
                       const NewtonOptions& options, const std::optional<Vector>& start) {
  spec.validate();
  check_hyper(spec, hyper);
  check_isolation(spec, w, hyper.rho);
  LatentSystem sys(spec, w);
  SparseCholesky chol(sys.pattern());
  Vector x0 = start ? *start : sys.initial_point();
  if (x0.size() != sys.size()) throw ModelError("latent mode: start vector has wrong length");
  auto r = detail::find_mode(sys, hyper, chol, options, std::move(x0));
  return LatentMode{std::move(r.x), std::move(r.precision), r.iterations, r.max_gradient};
}

double log_hyperprior(const ModelSpec& spec, const Hyper& hyper) {
  const Priors& pr = spec.priors;
  double lp = 0.0;
  if (spec.random_effects) {
    if (!spec.rho_mode.fixed) {
      if (!(hyper.rho > 0.0 && hyper.rho < 1.0)) return -std::numeric_limits<double>::infinity();
      const double l = logit(hyper.rho);
      lp += -0.5 * std::log(2.0 * std::numbers::pi * pr.logit_rho_variance) -
            0.5 * l * l / pr.logit_rho_variance;
    }
    lp += log_gamma_on_log_scale(hyper.tau, pr.tau_shape, pr.tau_rate);
  }
  if (spec.family == Family::Gaussian)
    lp += log_gamma_on_log_scale(hyper.sigma, pr.sigma_shape, pr.sigma_rate);
  return lp;
}

LaplaceEvidence laplace_log_marginal(const ModelSpec& spec, const NeighbourMatrix& w,
                                     const Hyper& hyper) {
  spec.validate();
  check_hyper(spec, hyper);
  check_isolation(spec, w, hyper.rho);
  LatentSystem sys(spec, w);
  SparseCholesky chol(sys.pattern());
  LerouxLogDet logdet(w);
  auto r = detail::find_mode(sys, hyper, chol, {}, sys.initial_point());
  const double ldq = spec.random_effects ? logdet(hyper.rho) : 0.0;
  const double dim = static_cast<double>(sys.size());
  LaplaceEvidence ev;
  ev.log_evidence = r.kernel + sys.constants(hyper, ldq) - 0.5 * r.factor->log_determinant() +
                    0.5 * dim * std::log(2.0 * std::numbers::pi);
  ev.log_hyperprior = log_hyperprior(spec, hyper);
  return ev;
}

namespace {

// One axis of the hyperparameter grid on its working scale.
struct Axis {
  enum Kind { LogitRho, LogTau, LogSigma } kind;
  double lo = 0.0;
  double hi = 0.0;
  int points = 1;
  double spacing() const { return points > 1 ? (hi - lo) / (points - 1) : 0.0; }
  double at(int i) const { return points > 1 ? lo + (hi - lo) * i / (points - 1) : 0.5 * (lo + hi); }
};

struct Evaluated {
  GridPoint point;
  std::vector<double> coords;
  Vector mode;
  std::optional<SparseFactor> factor;
};

Hyper hyper_from(const ModelSpec& spec, const std::vector<Axis>& axes,
                 const std::vector<double>& coords, const Hyper& base) {
  Hyper h = base;
  for (std::size_t d = 0; d < axes.size(); ++d) {
    switch (axes[d].kind) {
      case Axis::LogitRho: h.rho = logistic(coords[d]); break;
      case Axis::LogTau: h.tau = std::exp(coords[d]); break;
      case Axis::LogSigma: h.sigma = std::exp(coords[d]); break;
    }
  }
  if (spec.random_effects && spec.rho_mode.fixed) h.rho = spec.rho_mode.value;
  return h;
}

std::vector<std::vector<double>> grid_coordinates(const std::vector<Axis>& axes) {
  std::vector<std::vector<double>> out{{}};
  for (const Axis& a : axes) {
    std::vector<std::vector<double>> next;
    for (const auto& prefix : out)
      for (int i = 0; i < a.points; ++i) {
        auto c = prefix;
        c.push_back(a.at(i));
        next.push_back(std::move(c));
      }
    out = std::move(next);
  }
  return out;
}

// Marginal Gaussian of phi, beta and eta at one grid point. phi is reported
// centred (phi_k - mean(phi)) with the intercept absorbing mean(phi); the
// common level is weakly identified as rho -> 1 and would otherwise widen
// every phi interval by the same amount.
struct PointMarginals {
  std::vector<double> phi_mean, phi_sd, beta_mean, beta_sd, eta_mean, eta_sd;
};

PointMarginals point_marginals(const LatentSystem& sys, const Vector& mode,
                               const SparseFactor& factor) {
  const ModelSpec& spec = sys.spec();
  const Index n = spec.n(), p = spec.p(), nre = sys.random_effects();
  const auto sel = factor.selected_inverse();
  PointMarginals m;
  Matrix sbb(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) sbb(i, j) = sel.covariance(nre + i, nre + j);

  // c = Cov(x, mean(phi)) from one solve against the averaging vector.
  Vector c;
  double phibar = 0.0, var_phibar = 0.0;
  if (nre > 0) {
    Vector a = Vector::Zero(sys.size());
    a.head(nre).setConstant(1.0 / static_cast<double>(nre));
    c = factor.solve(a);
    phibar = mode.head(nre).mean();
    var_phibar = a.dot(c);
  }

  for (Index j = 0; j < p; ++j) {
    double mean = mode[nre + j], var = sbb(j, j);
    if (nre > 0 && j == 0) {
      mean += phibar;
      var += 2.0 * c[nre] + var_phibar;
    }
    m.beta_mean.push_back(mean);
    m.beta_sd.push_back(std::sqrt(std::max(var, 0.0)));
  }
  const Vector eta = sys.eta(mode);
  const Matrix& X = spec.design;
  for (Index k = 0; k < n; ++k) {
    const Vector xk = X.row(k).transpose();
    double v = xk.dot(sbb * xk);
    if (nre > 0) {
      const double vphi = sel.variance(k);
      m.phi_mean.push_back(mode[k] - phibar);
      m.phi_sd.push_back(std::sqrt(std::max(vphi - 2.0 * c[k] + var_phibar, 0.0)));
      v += vphi;
      for (Index j = 0; j < p; ++j) v += 2.0 * xk[j] * sel.covariance(k, nre + j);
    }
    m.eta_mean.push_back(eta[k]);
    m.eta_sd.push_back(std::sqrt(std::max(v, 0.0)));
  }
  return m;
}

Summary mixture_summary(const NormalMixture& mix) {
  Summary s;
  s.mean = mix.mean();
  s.sd = std::sqrt(std::max(mix.variance(), 0.0));
  s.median = mix.quantile(0.5);
  s.lower = mix.quantile(0.025);
  s.upper = mix.quantile(0.975);
  return s;
}

Summary discrete_summary(const std::vector<double>& values, const std::vector<double>& weights) {
  Summary s;
  double m = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    m += weights[i] * values[i];
    m2 += weights[i] * values[i] * values[i];
  }
  s.mean = m;
  s.sd = std::sqrt(std::max(m2 - m * m, 0.0));
  s.median = discrete_quantile(values, weights, 0.5);
  s.lower = discrete_quantile(values, weights, 0.025);
  s.upper = discrete_quantile(values, weights, 0.975);
  return s;
}

// Moment estimate of tau (and sigma) from the independence model (rho = 0).
Hyper independence_start(const LatentSystem& sys, SparseCholesky& chol, Vector& x) {
  const ModelSpec& spec = sys.spec();
  Hyper h;
  h.rho = 0.0;
  h.tau = 1.0;
  h.sigma = 1.0;
  if (spec.family == Family::Gaussian) {
    // Least-squares residual variance split evenly between noise and effects.
    const Matrix& X = spec.design;
    const Vector r = spec.y - spec.offset;
    const Vector beta = X.colPivHouseholderQr().solve(r);
    const double s2 = std::max((r - X * beta).squaredNorm() / std::max<double>(1.0, spec.n() - spec.p()), 1e-8);
    h.sigma = 2.0 / s2;
    h.tau = spec.random_effects ? 2.0 / s2 : 1.0;
  }
  x = sys.initial_point();
  const Index nre = sys.random_effects();
  for (int round = 0; round < 4; ++round) {
    auto r = detail::find_mode(sys, h, chol, {}, x);
    x = r.x;
    if (nre == 0 && spec.family != Family::Gaussian) break;
    const auto m = point_marginals(sys, r.x, *r.factor);
    if (nre > 0) {
      double s = 0.0;
      for (Index k = 0; k < nre; ++k) s += m.phi_mean[k] * m.phi_mean[k] + m.phi_sd[k] * m.phi_sd[k];
      h.tau = std::clamp(static_cast<double>(nre) / s, 1e-4, 1e6);
    }
    if (spec.family == Family::Gaussian) {
      double s = 0.0;
      for (Index k = 0; k < spec.n(); ++k) {
        const double d = spec.y[k] - m.eta_mean[k];
        s += d * d + m.eta_sd[k] * m.eta_sd[k];
      }
      h.sigma = std::clamp(static_cast<double>(spec.n()) / s, 1e-8, 1e12);
    }
  }
  return h;
}

}  // namespace

FitResult fit(const ModelSpec& spec, const NeighbourMatrix& w, const GridConfig& config) {
  spec.validate();
  if (spec.random_effects && w.size() != spec.n())
    throw ModelError("neighbour matrix has " + std::to_string(w.size()) + " areas, data has " +
                     std::to_string(spec.n()));
  if (spec.rho_mode.fixed) check_isolation(spec, w, spec.rho_mode.value);

  LatentSystem sys(spec, w);
  const Index n = spec.n(), p = spec.p(), nre = sys.random_effects();

  SparseCholesky main_chol(sys.pattern());
  Vector x_start;
  const Hyper base = independence_start(sys, main_chol, x_start);

  std::vector<Axis> axes;
  if (spec.random_effects && !spec.rho_mode.fixed)
    axes.push_back({Axis::LogitRho, config.logit_rho_min, config.logit_rho_max, config.rho_points});
  if (spec.random_effects)
    axes.push_back({Axis::LogTau, std::log(base.tau) - config.log_tau_halfwidth,
                    std::log(base.tau) + config.log_tau_halfwidth, config.tau_points});
  if (spec.family == Family::Gaussian)
    axes.push_back({Axis::LogSigma, std::log(base.sigma) - config.log_sigma_halfwidth,
                    std::log(base.sigma) + config.log_sigma_halfwidth, config.sigma_points});

  LerouxLogDet logdet(w);
  const unsigned threads = resolve_threads(config.threads);
  std::vector<SparseCholesky> chols;
  for (unsigned t = 0; t < threads; ++t) chols.emplace_back(sys.pattern());

  auto evaluate = [&](const std::vector<std::vector<double>>& coords, bool keep_factor) {
    std::vector<Evaluated> out(coords.size());
    // Log determinants are cached serially; workers only read them.
    std::vector<double> ldq(coords.size(), 0.0);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      out[i].coords = coords[i];
      out[i].point.hyper = hyper_from(spec, axes, coords[i], base);
      if (nre > 0) ldq[i] = logdet(out[i].point.hyper.rho);
    }
    parallel_for(coords.size(), threads, [&](unsigned worker, std::size_t i) {
      Evaluated& e = out[i];
      GridPoint& gp = e.point;
      gp.log_prior = log_hyperprior(spec, gp.hyper);
      try {
        auto r = detail::find_mode(sys, gp.hyper, chols[worker], {}, x_start);
        gp.log_evidence = r.kernel + sys.constants(gp.hyper, ldq[i]) -
                          0.5 * r.factor->log_determinant() +
                          0.5 * static_cast<double>(sys.size()) * std::log(2.0 * std::numbers::pi);
        gp.log_weight = gp.log_evidence + gp.log_prior;
        gp.ok = std::isfinite(gp.log_weight);
        if (!gp.ok) gp.log_weight = -std::numeric_limits<double>::infinity();
        e.mode = std::move(r.x);
        if (keep_factor) e.factor = std::move(r.factor);
      } catch (const NumericalError&) {
        gp.ok = false;
        gp.log_weight = -std::numeric_limits<double>::infinity();
      }
    });
    bool any = false;
    for (const auto& e : out) any = any || e.point.ok;
    if (!any) throw NumericalError("fit: every hyperparameter grid point failed");
    return out;
  };

  const int stages = axes.empty() ? 1 : 1 + std::max(0, config.refinements);
  std::vector<Evaluated> evaluated;
  for (int stage = 0; stage < stages; ++stage) {
    const bool last = stage + 1 == stages;
    evaluated = evaluate(grid_coordinates(axes), last);
    if (last) break;
    std::vector<double> lw;
    for (const auto& e : evaluated) lw.push_back(e.point.log_weight);
    const auto wts = normalize_log_weights(lw);
    for (std::size_t d = 0; d < axes.size(); ++d) {
      double m = 0.0, m2 = 0.0;
      for (std::size_t i = 0; i < evaluated.size(); ++i) {
        m += wts[i] * evaluated[i].coords[d];
        m2 += wts[i] * evaluated[i].coords[d] * evaluated[i].coords[d];
      }
      const double sd = std::sqrt(std::max(m2 - m * m, 0.0));
      const double half = std::max(4.0 * sd, axes[d].spacing());
      double lo = m - half, hi = m + half;
      if (axes[d].kind == Axis::LogitRho) {
        lo = std::max(lo, config.logit_rho_min);
        hi = std::min(hi, config.logit_rho_max);
      }
      axes[d].lo = lo;
      axes[d].hi = hi;
    }
  }

  FitResult res;
  res.backend = "laplace";
  res.family = spec.family;
  res.beta_names = spec.covariate_names;
  if (res.beta_names.empty())
    for (Index j = 0; j < p; ++j) res.beta_names.push_back(j == 0 ? "intercept" : "x" + std::to_string(j));
  res.grid.stages = stages;
  for (auto& e : evaluated) res.grid.points.push_back(e.point);
  res.grid.normalize();

  // Marginals from the points that carry weight.
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < evaluated.size(); ++i)
    if (res.grid.points[i].ok && res.grid.points[i].weight >= config.weight_floor) kept.push_back(i);
  std::vector<PointMarginals> marg(kept.size());
  parallel_for(kept.size(), threads, [&](unsigned, std::size_t t) {
    const auto& e = evaluated[kept[t]];
    marg[t] = point_marginals(sys, e.mode, *e.factor);
  });
  std::vector<double> kw;
  double ksum = 0.0;
  for (std::size_t i : kept) ksum += res.grid.points[i].weight;
  for (std::size_t i : kept) kw.push_back(res.grid.points[i].weight / ksum);
  for (std::size_t t = 0; t < kept.size(); ++t) {
    res.grid.points[kept[t]].phi_mean = marg[t].phi_mean;
    res.grid.points[kept[t]].phi_sd = marg[t].phi_sd;
  }

  auto build_mix = [&](const std::vector<double> PointMarginals::*mean,
                       const std::vector<double> PointMarginals::*sd, Index idx) {
    NormalMixture mix;
    mix.weights = kw;
    for (const auto& m : marg) {
      mix.means.push_back((m.*mean)[idx]);
      mix.sds.push_back((m.*sd)[idx]);
    }
    return mix;
  };

  for (Index j = 0; j < p; ++j)
    res.beta.push_back(mixture_summary(build_mix(&PointMarginals::beta_mean, &PointMarginals::beta_sd, j)));
  if (nre > 0) {
    res.phi.resize(n);
    parallel_for(static_cast<std::size_t>(n), threads, [&](unsigned, std::size_t k) {
      res.phi[k] = mixture_summary(build_mix(&PointMarginals::phi_mean, &PointMarginals::phi_sd, k));
    });
  }

  // Hyperparameter summaries over the discrete grid.
  {
    std::vector<double> rho, tau, sigma, wts;
    for (const auto& gp : res.grid.points) {
      rho.push_back(gp.hyper.rho);
      tau.push_back(gp.hyper.tau);
      sigma.push_back(gp.hyper.sigma);
      wts.push_back(gp.weight);
    }
    if (spec.random_effects) {
      res.rho = discrete_summary(rho, wts);
      res.tau = discrete_summary(tau, wts);
    }
    if (spec.family == Family::Gaussian) res.sigma = discrete_summary(sigma, wts);
  }

  // Linear predictor, fitted values and risks. Quantiles map through the
  // monotone inverse link; moments use Gauss-Hermite per mixture component.
  const auto& gh = gauss_hermite20();
  res.linear_predictor.resize(n);
  res.fitted.resize(n);
  if (spec.family == Family::Poisson) res.risk.resize(n);
  parallel_for(static_cast<std::size_t>(n), threads, [&](unsigned, std::size_t k) {
    const NormalMixture mix = build_mix(&PointMarginals::eta_mean, &PointMarginals::eta_sd, k);
    const Summary eta = mixture_summary(mix);
    res.linear_predictor[k] = eta;
    const double trials = spec.family == Family::Binomial ? spec.trials[k] : 0.0;
    auto moments = [&](double shift) {
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t c = 0; c < mix.weights.size(); ++c) {
        m1 += mix.weights[c] * gh.expect(mix.means[c], mix.sds[c], [&](double e) {
          return inverse_link(spec.family, e - shift, trials);
        });
        m2 += mix.weights[c] * gh.expect(mix.means[c], mix.sds[c], [&](double e) {
          const double v = inverse_link(spec.family, e - shift, trials);
          return v * v;
        });
      }
      return std::pair{m1, std::sqrt(std::max(m2 - m1 * m1, 0.0))};
    };
    Summary mu;
    std::tie(mu.mean, mu.sd) = moments(0.0);
    mu.median = inverse_link(spec.family, eta.median, trials);
    mu.lower = inverse_link(spec.family, eta.lower, trials);
    mu.upper = inverse_link(spec.family, eta.upper, trials);
    res.fitted[k] = mu;
    if (spec.family == Family::Poisson) {
      const double off = spec.offset[k];
      Summary r;
      std::tie(r.mean, r.sd) = moments(off);
      r.median = std::exp(eta.median - off);
      r.lower = std::exp(eta.lower - off);
      r.upper = std::exp(eta.upper - off);
      res.risk[k] = r;
    }
  });

  const double sigma_hat = res.sigma ? res.sigma->median : 1.0;
  res.pearson_residuals.resize(n);
  for (Index k = 0; k < n; ++k) {
    const double trials = spec.family == Family::Binomial ? spec.trials[k] : 0.0;
    const double mu = res.fitted[k].median;
    res.pearson_residuals[k] =
        (spec.y[k] - mu) / std::sqrt(response_variance(spec.family, mu, trials, sigma_hat));
  }

  // DIC from posterior draws: grid point by weight, then the latent Gaussian.
  {
    std::mt19937_64 rng(derive_seed(config.seed, 0xD1C));
    std::discrete_distribution<std::size_t> pick(kw.begin(), kw.end());
    double dsum = 0.0;
    const int draws = std::max(1, config.dic_samples);
    for (int s = 0; s < draws; ++s) {
      const std::size_t t = pick(rng);
      const auto& e = evaluated[kept[t]];
      const Vector x = e.mode + sample(*e.factor, rng);
      dsum += deviance(spec, sys.eta(x), e.point.hyper.sigma);
    }
    Vector xbar = Vector::Zero(sys.size());
    // sigma is averaged on the log scale; its natural-scale mean is dominated
    // by the right tail when noise and effects are weakly separated.
    double log_sigma_bar = 0.0;
    for (std::size_t t = 0; t < kept.size(); ++t) {
      xbar += kw[t] * evaluated[kept[t]].mode;
      log_sigma_bar += kw[t] * std::log(evaluated[kept[t]].point.hyper.sigma);
    }
    const double sigma_bar = std::exp(log_sigma_bar);
    res.mean_deviance = dsum / draws;
    res.p_d = res.mean_deviance - deviance(spec, sys.eta(xbar), sigma_bar);
    res.dic = res.mean_deviance + res.p_d;
  }
  return res;
}

}  // namespace adaptcar
