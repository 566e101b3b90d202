#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "adaptcar/graph.hpp"
#include "adaptcar/sparse_factor.hpp"

namespace adaptcar {

/// Geography plus group labels: 0 is the background region, 1..G the
/// elevated clusters. Graph must carry centroids.
struct Template {
  GraphPtr graph;
  std::vector<int> group;

  void validate() const;
  int groups() const;
  /// Per edge: 1 when exactly one endpoint lies in a cluster (group > 0).
  std::vector<std::uint8_t> boundary_flags() const;
  BoundarySet true_boundaries() const;
};

/// 20x20 unit lattice with five rectangular clusters (51 areas, 70 of the
/// 760 edges are true boundaries).
Template default_template();

struct SimScenario {
  double m = 1.0;  // cluster elevation of the random-effect mean
  bool include_covariate = true;
  double intercept = 3.6888794541139363;  // ln 40
  double beta = 0.1;
  double nu = 2.5;
  double range = 0.0;  // 0 = calibrate to mean correlation 0.5
  double variance = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

SimScenario scenario_a();
SimScenario scenario_b();

struct MaternMatrix {
  Matrix cov;
  std::size_t duplicate_pairs = 0;  // coincident centroids (correlation 1)
};

/// Matern covariance with smoothness 2.5 (closed form). Other smoothness
/// values are rejected.
MaternMatrix matern_covariance(const std::vector<Point>& coords, double nu, double range,
                               double variance);

/// Mean off-diagonal correlation of the nu = 2.5 kernel at `range`.
double mean_correlation(const std::vector<Point>& coords, double range);

/// Bisection on log range until the mean off-diagonal correlation is within
/// `tolerance` of the target. Throws ModelError when the target lies outside
/// what the geometry can reach.
double calibrate_range(const std::vector<Point>& coords, double target = 0.5,
                       double tolerance = 1e-3);

struct SimData {
  Vector y;
  Vector offset;
  Matrix design;  // intercept, then the covariate when included
  std::vector<std::string> covariate_names;
  Vector phi;
  Vector eta;
  Vector mu;
  Vector beta;  // true coefficients aligned with `design`
  std::vector<std::uint8_t> boundary;
};

/// Draws replicates for one (template, scenario); the Matern factor is
/// computed once.
class Generator {
 public:
  Generator(Template tmpl, SimScenario scenario);

  const Template& tmpl() const { return tmpl_; }
  const SimScenario& scenario() const { return scenario_; }
  double range() const { return range_; }
  const Matrix& factor() const { return lower_; }

  SimData generate(std::mt19937_64& rng) const;

 private:
  Template tmpl_;
  SimScenario scenario_;
  double range_;
  Matrix lower_;
  std::vector<std::uint8_t> boundary_;
};

}  // namespace adaptcar
