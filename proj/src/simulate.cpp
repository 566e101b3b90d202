#include "adaptcar/simulate.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "adaptcar/errors.hpp"

namespace adaptcar {

namespace {

double matern25(double d, double range) {
  const double a = std::sqrt(5.0) * d / range;
  return (1.0 + a + a * a / 3.0) * std::exp(-a);
}

std::vector<double> pair_distances(const std::vector<Point>& coords) {
  std::vector<double> d;
  d.reserve(coords.size() * (coords.size() - 1) / 2);
  for (std::size_t i = 0; i < coords.size(); ++i)
    for (std::size_t j = i + 1; j < coords.size(); ++j)
      d.push_back(std::hypot(coords[i].x - coords[j].x, coords[i].y - coords[j].y));
  return d;
}

double mean_corr(const std::vector<double>& dist, double range) {
  double s = 0.0;
  for (double d : dist) s += matern25(d, range);
  return s / static_cast<double>(dist.size());
}

}  // namespace

void Template::validate() const {
  if (!graph) throw ModelError("template: missing graph");
  if (!graph->has_coords()) throw ModelError("template: graph has no centroids");
  if (static_cast<Index>(group.size()) != graph->size())
    throw ModelError("template: " + std::to_string(group.size()) + " labels for " +
                     std::to_string(graph->size()) + " areas");
  for (std::size_t k = 0; k < group.size(); ++k)
    if (group[k] < 0) throw ModelError("template: negative group label at area " + std::to_string(k));
}

int Template::groups() const { return group.empty() ? 0 : *std::max_element(group.begin(), group.end()); }

std::vector<std::uint8_t> Template::boundary_flags() const {
  std::vector<std::uint8_t> flags(graph->edge_count(), 0);
  for (std::size_t e = 0; e < flags.size(); ++e) {
    const Edge& ed = graph->edge(e);
    flags[e] = (group[ed.a] > 0) != (group[ed.b] > 0);
  }
  return flags;
}

BoundarySet Template::true_boundaries() const {
  BoundarySet b;
  const auto flags = boundary_flags();
  for (std::size_t e = 0; e < flags.size(); ++e)
    if (flags[e]) {
      b.edges.push_back(graph->edge(e));
      b.edge_ids.push_back(e);
    }
  return b;
}

Template default_template() {
  Template t;
  t.graph = make_lattice(20, 20);
  t.group.assign(400, 0);
  struct Rect {
    int r0, c0, rows, cols;
  };
  // Interior, mutually non-adjacent rectangles; perimeters 18+16+14+12+10.
  const Rect rects[] = {{2, 2, 2, 7}, {7, 14, 6, 2}, {15, 3, 2, 5}, {8, 5, 3, 3}, {14, 12, 3, 2}};
  int label = 1;
  for (const Rect& r : rects) {
    for (int i = r.r0; i < r.r0 + r.rows; ++i)
      for (int j = r.c0; j < r.c0 + r.cols; ++j) t.group[i * 20 + j] = label;
    ++label;
  }
  return t;
}

void SimScenario::validate() const {
  if (!(m >= 0.0)) throw ModelError("scenario: m must be non-negative");
  if (nu != 2.5) throw ModelError("scenario: only Matern smoothness 2.5 is supported");
  if (!(range >= 0.0)) throw ModelError("scenario: range must be positive (0 = calibrate)");
  if (!(variance > 0.0)) throw ModelError("scenario: variance must be positive");
}

SimScenario scenario_a() { return {}; }

SimScenario scenario_b() {
  SimScenario s;
  s.m = 0.0;
  return s;
}

MaternMatrix matern_covariance(const std::vector<Point>& coords, double nu, double range,
                               double variance) {
  if (nu != 2.5) throw ModelError("matern: only smoothness 2.5 is supported");
  if (!(range > 0.0)) throw ModelError("matern: range must be positive");
  if (!(variance >= 0.0)) throw ModelError("matern: variance must be non-negative");
  const Index n = static_cast<Index>(coords.size());
  MaternMatrix out;
  out.cov.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    out.cov(i, i) = variance;
    for (Index j = i + 1; j < n; ++j) {
      const double d = std::hypot(coords[i].x - coords[j].x, coords[i].y - coords[j].y);
      if (d == 0.0) ++out.duplicate_pairs;
      out.cov(i, j) = out.cov(j, i) = variance * matern25(d, range);
    }
  }
  return out;
}

double mean_correlation(const std::vector<Point>& coords, double range) {
  if (coords.size() < 2) throw ModelError("mean correlation: need at least two areas");
  if (!(range > 0.0)) throw ModelError("mean correlation: range must be positive");
  return mean_corr(pair_distances(coords), range);
}

double calibrate_range(const std::vector<Point>& coords, double target, double tolerance) {
  if (coords.size() < 2) throw ModelError("calibrate_range: need at least two areas");
  const auto dist = pair_distances(coords);
  const double dmax = *std::max_element(dist.begin(), dist.end());
  if (!(dmax > 0.0)) throw ModelError("calibrate_range: all centroids coincide");
  double lo = std::log(dmax * 1e-6), hi = std::log(dmax * 1e6);
  const double at_lo = mean_corr(dist, std::exp(lo)), at_hi = mean_corr(dist, std::exp(hi));
  if (!(target > at_lo && target < at_hi))
    throw ModelError("calibrate_range: target mean correlation " + std::to_string(target) +
                     " is not attainable on this geometry (reachable range " +
                     std::to_string(at_lo) + " to " + std::to_string(at_hi) + ")");
  // Mean correlation increases with the range.
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double c = mean_corr(dist, std::exp(mid));
    if (c < target)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-12) break;
  }
  const double range = std::exp(0.5 * (lo + hi));
  if (std::abs(mean_corr(dist, range) - target) > tolerance)
    throw ModelError("calibrate_range: bisection did not reach the tolerance");
  return range;
}

Generator::Generator(Template tmpl, SimScenario scenario)
    : tmpl_(std::move(tmpl)), scenario_(scenario) {
  tmpl_.validate();
  scenario_.validate();
  const auto& coords = tmpl_.graph->coords();
  range_ = scenario_.range > 0.0 ? scenario_.range : calibrate_range(coords, 0.5);
  Matrix cov = matern_covariance(coords, scenario_.nu, range_, scenario_.variance).cov;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += 1e-10;
    llt.compute(cov);
    if (llt.info() != Eigen::Success)
      throw NumericalError("simulate: Matern covariance is not positive definite");
  }
  lower_ = llt.matrixL();
  // With m = 0 the cluster labels carry no step, so nothing is a true boundary.
  boundary_ = tmpl_.boundary_flags();
  if (scenario_.m == 0.0) std::fill(boundary_.begin(), boundary_.end(), std::uint8_t{0});
}

SimData Generator::generate(std::mt19937_64& rng) const {
  const Index n = tmpl_.graph->size();
  std::normal_distribution<double> norm(0.0, 1.0);
  SimData d;
  Vector z(n);
  for (auto& v : z) v = norm(rng);
  d.phi = lower_ * z;
  for (Index k = 0; k < n; ++k)
    if (tmpl_.group[k] > 0) d.phi[k] += scenario_.m;

  const bool cov = scenario_.include_covariate;
  d.design = Matrix::Ones(n, cov ? 2 : 1);
  d.covariate_names = {"intercept"};
  d.beta = Vector::Constant(1, scenario_.intercept);
  if (cov) {
    for (Index k = 0; k < n; ++k) d.design(k, 1) = norm(rng);
    d.covariate_names.push_back("x");
    d.beta.conservativeResize(2);
    d.beta[1] = scenario_.beta;
  }
  d.offset = Vector::Zero(n);
  d.eta = d.design * d.beta + d.phi;
  d.mu = d.eta.array().exp();
  d.y.resize(n);
  for (Index k = 0; k < n; ++k) {
    std::poisson_distribution<long> pois(d.mu[k]);
    d.y[k] = static_cast<double>(pois(rng));
  }
  d.boundary = boundary_;
  return d;
}

}  // namespace adaptcar
