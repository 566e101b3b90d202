#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "adaptcar/errors.hpp"
#include "adaptcar/simulate.hpp"
#include "doctest.h"

using namespace adaptcar;
using doctest::Approx;

TEST_CASE("matern covariance: kernel values and positive semidefiniteness") {
  std::vector<Point> pts = {{0, 0}, {1, 0}, {0, 2}, {3, 1}, {1.5, 1.5}};
  const auto m = matern_covariance(pts, 2.5, 1.7, 2.0);
  CHECK(m.duplicate_pairs == 0);
  for (int i = 0; i < 5; ++i) CHECK(m.cov(i, i) == 2.0);
  const double a = std::sqrt(5.0) * 1.0 / 1.7;
  CHECK(m.cov(0, 1) == Approx(2.0 * (1 + a + a * a / 3) * std::exp(-a)).epsilon(1e-14));
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.cov);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10);

  double prev = 1.0;
  for (double d = 0.1; d < 200.0; d *= 1.5) {
    const double c = matern_covariance({{0, 0}, {d, 0}}, 2.5, 3.0, 1.0).cov(0, 1);
    CHECK(c < prev);
    prev = c;
  }
  CHECK(prev < 1e-12);

  const auto dup = matern_covariance({{1, 1}, {1, 1}}, 2.5, 1.0, 1.0);
  CHECK(dup.duplicate_pairs == 1);
  CHECK(dup.cov(0, 1) == 1.0);
  CHECK_THROWS_AS(matern_covariance(pts, 1.5, 1.0, 1.0), ModelError);
  CHECK_THROWS_AS(matern_covariance(pts, 2.5, 0.0, 1.0), ModelError);
}

TEST_CASE("calibrate_range") {
  SUBCASE("one pair: closed form") {
    const double d = 3.0;
    // Solve (1 + a + a^2/3) exp(-a) = 0.5 for a by Newton; range = sqrt(5) d / a.
    double a = 1.0;
    for (int i = 0; i < 50; ++i) {
      const double f = (1 + a + a * a / 3) * std::exp(-a) - 0.5;
      const double fp = -(a + a * a) / 3 * std::exp(-a);
      a -= f / fp;
    }
    const double range = calibrate_range({{0, 0}, {d, 0}});
    CHECK(range == Approx(std::sqrt(5.0) * d / a).epsilon(1e-6));
  }
  SUBCASE("mean correlation increases with the range") {
    const auto g = make_lattice(6, 6);
    double prev = 0.0;
    for (double r = 0.2; r < 100.0; r *= 1.3) {
      const double c = mean_correlation(g->coords(), r);
      CHECK(c > prev);
      prev = c;
    }
  }
  SUBCASE("default template is calibrated") {
    const auto t = default_template();
    const double r = calibrate_range(t.graph->coords());
    CHECK(std::abs(mean_correlation(t.graph->coords(), r) - 0.5) < 1e-3);
  }
  SUBCASE("unattainable targets") {
    CHECK_THROWS_AS(calibrate_range({{0, 0}, {1, 0}, {0, 1}}, 1.0), ModelError);
    CHECK_THROWS_AS(calibrate_range({{0, 0}}, 0.5), ModelError);
  }
}

TEST_CASE("default template boundaries") {
  const auto t = default_template();
  CHECK(t.graph->edge_count() == 760);
  CHECK(t.groups() == 5);
  int grey = 0;
  for (int g : t.group) grey += g > 0;
  CHECK(grey == 51);
  // Brute-force classification over all lattice neighbour pairs.
  std::size_t brute = 0;
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 20; ++c) {
      const int k = r * 20 + c;
      if (c + 1 < 20) brute += (t.group[k] > 0) != (t.group[k + 1] > 0);
      if (r + 1 < 20) brute += (t.group[k] > 0) != (t.group[k + 20] > 0);
    }
  const auto b = t.true_boundaries();
  CHECK(b.size() == brute);
  CHECK(b.size() == 70);
  const auto flags = t.boundary_flags();
  for (std::size_t e = 0; e < flags.size(); ++e) {
    const Edge& ed = t.graph->edge(e);
    CHECK(flags[e] == ((t.group[ed.a] > 0) != (t.group[ed.b] > 0)));
  }
}

TEST_CASE("generate: degenerate field and determinism") {
  auto t = default_template();
  SimScenario s = scenario_b();
  s.variance = 1e-16;
  s.include_covariate = false;
  const Generator gen(t, s);
  std::mt19937_64 rng(3);
  const auto d = gen.generate(rng);
  for (Index k = 0; k < 400; ++k) CHECK(d.mu[k] == Approx(40.0).epsilon(1e-6));
  CHECK(d.design.cols() == 1);
  CHECK(d.offset.isZero());
  // No step, no true boundaries.
  CHECK(std::count(d.boundary.begin(), d.boundary.end(), 1) == 0);

  const Generator a(t, scenario_a());
  std::mt19937_64 r1(99), r2(99);
  const auto x = a.generate(r1), y = a.generate(r2);
  CHECK(x.y == y.y);
  CHECK(x.phi == y.phi);
  CHECK(x.design == y.design);
  CHECK(x.beta[1] == 0.1);
  CHECK(x.eta.isApprox(x.design * x.beta + x.phi));
  CHECK(std::count(x.boundary.begin(), x.boundary.end(), 1) == 70);
}

TEST_CASE("generate: field moments match the group means and Matern entries") {
  auto t = default_template();
  const Generator gen(t, scenario_a());
  const Index n = 400;
  const int reps = 2000;
  std::mt19937_64 rng(17);
  Vector sum = Vector::Zero(n), sum2 = Vector::Zero(n);
  // Two fixed areas, a few cells apart.
  const Index p = 0, q = 3;
  double cpq = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto d = gen.generate(rng);
    sum += d.phi;
    sum2 += d.phi.cwiseProduct(d.phi);
    const double dp = d.phi[p] - (t.group[p] > 0 ? 1.0 : 0.0);
    const double dq = d.phi[q] - (t.group[q] > 0 ? 1.0 : 0.0);
    cpq += dp * dq;
  }
  int outside = 0;
  for (Index k = 0; k < n; ++k) {
    const double mean = sum[k] / reps;
    const double expected = t.group[k] > 0 ? 1.0 : 0.0;
    const double se = std::sqrt(1.0 / reps);
    outside += std::abs(mean - expected) > 3.0 * se;
  }
  // About 0.3% of areas may sit outside three standard errors by chance.
  CHECK(outside <= 6);

  const double target = matern_covariance(t.graph->coords(), 2.5, gen.range(), 1.0).cov(p, q);
  const double est = cpq / reps;
  // Var of a product of unit-variance correlated normals is 1 + c^2.
  const double se = std::sqrt((1.0 + target * target) / reps);
  CHECK(std::abs(est - target) <= 3.0 * se);
}
