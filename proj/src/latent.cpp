#include "latent.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "adaptcar/errors.hpp"

namespace adaptcar::detail {

namespace {

int value_position(const SparseMatrix& m, Index row, Index col) {
  const int* outer = m.outerIndexPtr();
  const int* inner = m.innerIndexPtr();
  const int* b = inner + outer[col];
  const int* e = inner + outer[col + 1];
  const int* it = std::lower_bound(b, e, static_cast<int>(row));
  if (it == e || *it != row) throw std::logic_error("latent pattern lookup failed");
  return static_cast<int>(it - inner);
}

}  // namespace

LatentSystem::LatentSystem(const ModelSpec& spec, const NeighbourMatrix& w)
    : spec_(spec), w_(w), n_(spec.n()), p_(spec.p()), nre_(spec.random_effects ? spec.n() : 0) {
  if (spec.random_effects && w.size() != n_)
    throw ModelError("neighbour matrix has " + std::to_string(w.size()) + " areas, data has " +
                     std::to_string(n_));
  row_sums_ = spec.random_effects ? w.row_sums() : std::vector<Index>(n_, 0);
  const Index dim = size();
  std::vector<Eigen::Triplet<double>> trip;
  for (Index i = 0; i < dim; ++i) trip.emplace_back(i, i, 1.0);
  if (spec.random_effects) {
    const auto& g = w.graph();
    for (std::size_t id = 0; id < g.edge_count(); ++id) {
      if (!w.active(id)) continue;
      const Edge& e = g.edge(id);
      active_edges_.push_back(e);
      trip.emplace_back(e.a, e.b, 1.0);
      trip.emplace_back(e.b, e.a, 1.0);
    }
    for (Index k = 0; k < n_; ++k)
      for (Index j = 0; j < p_; ++j) {
        trip.emplace_back(k, nre_ + j, 1.0);
        trip.emplace_back(nre_ + j, k, 1.0);
      }
  }
  for (Index i = 0; i < p_; ++i)
    for (Index j = 0; j < p_; ++j)
      if (i != j) trip.emplace_back(nre_ + i, nre_ + j, 1.0);
  pattern_.resize(dim, dim);
  pattern_.setFromTriplets(trip.begin(), trip.end());
  pattern_.makeCompressed();

  diag_pos_.resize(dim);
  for (Index i = 0; i < dim; ++i) diag_pos_[i] = value_position(pattern_, i, i);
  for (const Edge& e : active_edges_)
    edge_pos_.push_back({value_position(pattern_, e.a, e.b), value_position(pattern_, e.b, e.a)});
  if (spec.random_effects) {
    phi_beta_pos_.resize(n_ * p_);
    beta_phi_pos_.resize(n_ * p_);
    for (Index k = 0; k < n_; ++k)
      for (Index j = 0; j < p_; ++j) {
        phi_beta_pos_[k * p_ + j] = value_position(pattern_, k, nre_ + j);
        beta_phi_pos_[k * p_ + j] = value_position(pattern_, nre_ + j, k);
      }
  }
  beta_beta_pos_.resize(p_ * p_);
  for (Index i = 0; i < p_; ++i)
    for (Index j = 0; j < p_; ++j)
      beta_beta_pos_[i * p_ + j] = value_position(pattern_, nre_ + i, nre_ + j);
}

Vector LatentSystem::eta(const Vector& x) const {
  Vector e = spec_.offset + spec_.design * x.tail(p_);
  if (nre_ > 0) e += x.head(nre_);
  return e;
}

Vector LatentSystem::q_times(double rho, const Vector& phi) const {
  Vector out(n_);
  for (Index k = 0; k < n_; ++k)
    out[k] = (rho * static_cast<double>(row_sums_[k]) + 1.0 - rho) * phi[k];
  for (const Edge& e : active_edges_) {
    out[e.a] -= rho * phi[e.b];
    out[e.b] -= rho * phi[e.a];
  }
  return out;
}

double LatentSystem::kernel(const Hyper& h, const Vector& x) const {
  const Vector e = eta(x);
  const Family fam = spec_.family;
  double v = 0.0;
  for (Index k = 0; k < n_; ++k) {
    const double trials = fam == Family::Binomial ? spec_.trials[k] : 0.0;
    v += log_likelihood(fam, spec_.y[k], trials, e[k], h.sigma);
  }
  if (nre_ > 0) {
    const Vector phi = x.head(nre_);
    v -= 0.5 * h.tau * phi.dot(q_times(h.rho, phi));
  }
  v -= 0.5 * x.tail(p_).squaredNorm() / spec_.priors.beta_variance;
  return v;
}

double LatentSystem::constants(const Hyper& h, double log_det_q) const {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  double c = -0.5 * static_cast<double>(p_) * (log2pi + std::log(spec_.priors.beta_variance));
  if (nre_ > 0)
    c += 0.5 * (static_cast<double>(nre_) * std::log(h.tau) + log_det_q) -
         0.5 * static_cast<double>(nre_) * log2pi;
  return c;
}

void LatentSystem::gradient(const Hyper& h, const Vector& x, Vector& g) const {
  const Vector e = eta(x);
  const Family fam = spec_.family;
  Vector lg(n_);
  for (Index k = 0; k < n_; ++k) {
    const double trials = fam == Family::Binomial ? spec_.trials[k] : 0.0;
    lg[k] = likelihood_term(fam, spec_.y[k], trials, e[k], h.sigma).gradient;
  }
  g.resize(size());
  if (nre_ > 0) g.head(nre_) = lg - h.tau * q_times(h.rho, x.head(nre_));
  g.tail(p_) = spec_.design.transpose() * lg - x.tail(p_) / spec_.priors.beta_variance;
}

void LatentSystem::precision(const Hyper& h, const Vector& x, SparseMatrix& out) const {
  if (out.nonZeros() != pattern_.nonZeros() || out.rows() != pattern_.rows()) out = pattern_;
  double* val = out.valuePtr();
  std::fill(val, val + out.nonZeros(), 0.0);
  const Vector e = eta(x);
  const Family fam = spec_.family;
  Vector c(n_);
  for (Index k = 0; k < n_; ++k) {
    const double trials = fam == Family::Binomial ? spec_.trials[k] : 0.0;
    c[k] = likelihood_term(fam, spec_.y[k], trials, e[k], h.sigma).curvature;
  }
  const Matrix& X = spec_.design;
  if (nre_ > 0) {
    for (Index k = 0; k < n_; ++k)
      val[diag_pos_[k]] =
          h.tau * (h.rho * static_cast<double>(row_sums_[k]) + 1.0 - h.rho) + c[k];
    for (const auto& pos : edge_pos_) {
      val[pos[0]] = -h.tau * h.rho;
      val[pos[1]] = -h.tau * h.rho;
    }
    for (Index k = 0; k < n_; ++k)
      for (Index j = 0; j < p_; ++j) {
        const double v = c[k] * X(k, j);
        val[phi_beta_pos_[k * p_ + j]] = v;
        val[beta_phi_pos_[k * p_ + j]] = v;
      }
  }
  const Matrix xtcx = X.transpose() * c.asDiagonal() * X;
  for (Index i = 0; i < p_; ++i)
    for (Index j = 0; j < p_; ++j)
      val[beta_beta_pos_[i * p_ + j]] =
          xtcx(i, j) + (i == j ? 1.0 / spec_.priors.beta_variance : 0.0);
}

Vector LatentSystem::initial_point() const {
  Vector x = Vector::Zero(size());
  const Vector& y = spec_.y;
  double b0 = 0.0;
  switch (spec_.family) {
    case Family::Poisson:
      b0 = std::log((y.sum() + 0.5) / spec_.offset.array().exp().sum());
      break;
    case Family::Binomial: {
      const double p = (y.sum() + 0.5) / (spec_.trials.sum() + 1.0);
      b0 = std::log(p / (1.0 - p)) - spec_.offset.mean();
      break;
    }
    case Family::Gaussian:
      b0 = (y - spec_.offset).mean();
      break;
  }
  x[nre_] = b0;
  return x;
}

LerouxLogDet::LerouxLogDet(const NeighbourMatrix& w) : w_(w) {}

double LerouxLogDet::operator()(double rho) {
  if (rho == 0.0) return 0.0;
  auto it = cache_.find(rho);
  if (it != cache_.end()) return it->second;
  const auto q = build_precision(rho, 1.0, w_);
  if (!chol_) chol_.emplace(q.matrix);
  const double v = chol_->factorize(q.matrix).log_determinant();
  cache_.emplace(rho, v);
  return v;
}

ModeResult find_mode(const LatentSystem& sys, const Hyper& h, SparseCholesky& chol,
                     const NewtonOptions& options, Vector x) {
  ModeResult r;
  Vector g;
  SparseMatrix hess;
  double f = sys.kernel(h, x);
  if (!std::isfinite(f)) {
    x = sys.initial_point();
    f = sys.kernel(h, x);
  }
  for (int it = 0; it <= options.max_iterations; ++it) {
    sys.gradient(h, x, g);
    sys.precision(h, x, hess);
    const double gmax = g.cwiseAbs().maxCoeff();
    SparseFactor factor = chol.factorize(hess);
    if (gmax < options.gradient_tolerance) {
      r.x = std::move(x);
      r.precision = std::move(hess);
      r.factor.emplace(std::move(factor));
      r.iterations = it;
      r.max_gradient = gmax;
      r.kernel = f;
      return r;
    }
    if (it == options.max_iterations) break;
    const Vector step = factor.solve(g);
    const double slope = g.dot(step);
    // Near the mode the predicted ascent falls below the rounding noise of f.
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      Vector trial = x + t * step;
      const double ft = sys.kernel(h, trial);
      if (std::isfinite(ft) && ft >= f + 1e-4 * t * slope - noise) {
        x = std::move(trial);
        f = ft;
        moved = true;
        break;
      }
    }
    if (!moved) {
      // At the floating-point floor the step no longer changes the objective.
      if (step.cwiseAbs().maxCoeff() < 1e-9 * (1.0 + x.cwiseAbs().maxCoeff())) {
        r.x = std::move(x);
        r.precision = std::move(hess);
        r.factor.emplace(std::move(factor));
        r.iterations = it;
        r.max_gradient = gmax;
        r.kernel = f;
        return r;
      }
      throw NumericalError("latent mode: line search failed (max |gradient| = " +
                           std::to_string(gmax) + ")");
    }
  }
  throw NumericalError("latent mode: no convergence after " +
                       std::to_string(options.max_iterations) + " Newton iterations");
}

}  // namespace adaptcar::detail
