#include <algorithm>
#include <cmath>
#include <random>

#include "adaptcar/diagnostics.hpp"
#include "adaptcar/errors.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adaptcar;
using doctest::Approx;

namespace {

// Double loop over the dense weight matrix.
double brute_force_moran(const Vector& v, const NeighbourMatrix& w) {
  const Index n = v.size();
  const Eigen::MatrixXd W = testing::dense_w(w);
  const double mean = v.mean();
  double num = 0.0, den = 0.0, s0 = 0.0;
  for (Index k = 0; k < n; ++k) {
    den += (v[k] - mean) * (v[k] - mean);
    for (Index j = 0; j < n; ++j) {
      num += W(k, j) * (v[k] - mean) * (v[j] - mean);
      s0 += W(k, j);
    }
  }
  return static_cast<double>(n) / s0 * num / den;
}

Vector random_vector(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> norm(0.0, 1.0);
  Vector v(n);
  for (auto& x : v) x = norm(rng);
  return v;
}

GraphPtr complete_graph(Index n) {
  std::vector<Edge> edges;
  for (Index a = 0; a < n; ++a)
    for (Index b = a + 1; b < n; ++b) edges.push_back({a, b});
  return std::make_shared<const AdjacencyGraph>(n, edges);
}

// Row-smoothed noise on a lattice: strongly positively autocorrelated.
Vector smooth_field(const NeighbourMatrix& w, std::mt19937_64& rng) {
  const Vector z = random_vector(w.size(), rng);
  Vector v = z;
  for (int pass = 0; pass < 3; ++pass) {
    Vector next = v;
    for (Index k = 0; k < w.size(); ++k) {
      double s = v[k];
      int c = 1;
      w.for_each_neighbour(k, [&](Index j) {
        s += v[j];
        ++c;
      });
      next[k] = s / c;
    }
    v = next;
  }
  return v;
}

}  // namespace

TEST_CASE("morans_i: hand-evaluated examples and undefined cases") {
  auto g = std::make_shared<const AdjacencyGraph>(2, std::vector<Edge>{{0, 1}});
  const auto w = full_matrix(g);
  Vector v(2);
  v << 1.0, -1.0;
  CHECK(morans_i(v, w) == Approx(-1.0));
  CHECK_THROWS_AS(morans_i(Vector::Constant(2, 3.0), w), ModelError);
  auto none = full_matrix(g);
  none.set(0, false);
  CHECK_THROWS_AS(morans_i(v, none), ModelError);
}

TEST_CASE("morans_i matches a brute-force double loop on a 10x10 lattice") {
  std::mt19937_64 rng(3);
  auto w = full_matrix(make_lattice(10, 10));
  for (int rep = 0; rep < 5; ++rep) {
    const Vector v = random_vector(100, rng);
    CHECK(std::abs(morans_i(v, w) - brute_force_moran(v, w)) < 1e-12);
    w.toggle(static_cast<std::size_t>(rep * 17));
  }
}

TEST_CASE("morans_i is invariant to shift and positive scaling") {
  std::mt19937_64 rng(5);
  auto g = testing::random_graph(25, 0.2, rng);
  const auto w = full_matrix(g);
  const Vector v = random_vector(25, rng);
  const double base = morans_i(v, w);
  CHECK(morans_i((v.array() + 17.5).matrix(), w) == Approx(base).epsilon(1e-12));
  CHECK(morans_i(v * 3.25, w) == Approx(base).epsilon(1e-12));
}

TEST_CASE("morans_i on a complete graph averages -1/(n-1) under exchangeable values") {
  const Index n = 8;
  const auto w = full_matrix(complete_graph(n));
  std::mt19937_64 rng(7);
  const int reps = 4000;
  double sum = 0.0, sum2 = 0.0;
  for (int r = 0; r < reps; ++r) {
    const double i = morans_i(random_vector(n, rng), w);
    sum += i;
    sum2 += i * i;
  }
  const double mean = sum / reps;
  // On a complete graph the statistic is in fact constant, so se is ~0.
  const double se = std::sqrt(std::max(sum2 / reps - mean * mean, 0.0) / reps);
  CHECK(std::abs(mean + 1.0 / (n - 1)) <= 3.0 * se + 1e-12);
}

TEST_CASE("moran_permutation_test") {
  auto w = full_matrix(make_lattice(8, 8));
  std::mt19937_64 rng(11);

  SUBCASE("no permutations gives p = 1") {
    CHECK(moran_permutation_test(random_vector(64, rng), w, 0, 1) == 1.0);
  }
  SUBCASE("smooth field is detected") {
    const Vector v = smooth_field(w, rng);
    CHECK(moran_permutation_test(v, w, 999, 2) <= 0.01);
  }
  SUBCASE("deterministic and thread-count invariant") {
    const Vector v = random_vector(64, rng);
    const double a = moran_permutation_test(v, w, 199, 99, 1);
    CHECK(a == moran_permutation_test(v, w, 199, 99, 1));
    CHECK(a == moran_permutation_test(v, w, 199, 99, 4));
  }
  SUBCASE("null calibration") {
    int rejected = 0;
    for (int r = 0; r < 200; ++r)
      rejected += moran_permutation_test(random_vector(64, rng), w, 199, 1000 + r) <= 0.05;
    const double rate = rejected / 200.0;
    CHECK(rate >= 0.01);
    CHECK(rate <= 0.10);
  }
}

TEST_CASE("overdispersion") {
  auto lattice = make_lattice(5, 6);
  const auto w = full_matrix(lattice);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> norm(0.0, 1.0);

  SUBCASE("calibrated Pearson residuals give about one") {
    FitResult fit;
    Vector mu = Vector::Constant(400, 2.0);
    ModelSpec spec;
    spec.family = Family::Gaussian;
    spec.design = Matrix::Ones(400, 1);
    fit.pearson_residuals.resize(400);
    for (auto& r : fit.pearson_residuals) r = norm(rng);
    spec.y = mu + fit.pearson_residuals;
    CHECK(overdispersion(spec, fit) == Approx(1.0).epsilon(0.15));
    fit.pearson_residuals.resize(1);
    spec.y.resize(1);
    spec.design = Matrix::Ones(1, 1);
    CHECK_THROWS_AS(overdispersion(spec, fit), ModelError);
  }

  SUBCASE("extra-Poisson noise is flagged and random effects absorb it") {
    int flagged = 0, lowered = 0;
    const int reps = 100;
    GridConfig cfg;
    cfg.dic_samples = 10;
    for (int r = 0; r < reps; ++r) {
      Matrix cov(30, 1);
      Vector y(30);
      for (Index k = 0; k < 30; ++k) {
        cov(k, 0) = norm(rng);
        std::poisson_distribution<int> pois(std::exp(std::log(30.0) + 0.3 * cov(k, 0) + 0.5 * norm(rng)));
        y[k] = pois(rng);
      }
      ModelSpec plain = poisson_spec(y, Vector::Zero(30), cov);
      plain.random_effects = false;
      const double od_plain = overdispersion(plain, fit(plain, w, cfg));
      ModelSpec mixed = poisson_spec(y, Vector::Zero(30), cov);
      const double od_mixed = overdispersion(mixed, fit(mixed, w, cfg));
      flagged += od_plain > 2.0;
      lowered += od_mixed < od_plain;
    }
    CHECK(flagged >= 90);
    CHECK(lowered >= 90);
  }
}

namespace {

FitResult point_fit(const Vector& mu, const std::vector<Summary>& beta) {
  FitResult f;
  for (Index k = 0; k < mu.size(); ++k) f.fitted.push_back({mu[k], 0.0, mu[k], mu[k], mu[k]});
  f.beta = beta;
  return f;
}

}  // namespace

TEST_CASE("score_replicate: exact fit and set arithmetic") {
  // Path of 11 areas: 10 edges; edges 0 and 1 are true boundaries.
  std::vector<Edge> edges;
  for (Index k = 0; k < 10; ++k) edges.push_back({k, k + 1});
  auto g = std::make_shared<const AdjacencyGraph>(11, edges);
  Truth truth;
  truth.mu = Vector::LinSpaced(11, 1.0, 11.0);
  truth.beta = Vector(2);
  truth.beta << 3.0, 0.1;
  truth.boundary.assign(10, 0);
  truth.boundary[0] = truth.boundary[1] = 1;

  auto w_hat = full_matrix(g);
  w_hat.set(0, false);
  const auto fit = point_fit(truth.mu, {{3.0, 0, 3.0, 2.9, 3.1}, {0.1, 0, 0.1, 0.05, 0.15}});
  const auto s = score_replicate(truth, fit, w_hat);
  CHECK(*s.pct_bias_mu == 0.0);
  CHECK(*s.pct_rmse_mu == 0.0);
  CHECK(*s.pct_bias_beta == Approx(0.0));
  CHECK(*s.coverage_beta == 100.0);
  CHECK(*s.ba() == Approx(50.0));
  CHECK(*s.nba() == Approx(100.0));

  // BA + false-negative rate = 100; NBA + false-positive rate = 100.
  auto w2 = full_matrix(g);
  w2.set(1, false);
  w2.set(5, false);
  w2.set(7, false);
  const auto s2 = score_replicate(truth, fit, w2);
  const double fn = 100.0 * 1 / 2, fp = 100.0 * 2 / 8;
  CHECK(*s2.ba() + fn == 100.0);
  CHECK(*s2.nba() + fp == 100.0);
}

TEST_CASE("score_replicate: relative errors and unavailable metrics") {
  auto g = std::make_shared<const AdjacencyGraph>(2, std::vector<Edge>{{0, 1}});
  Truth truth;
  truth.mu = Vector(2);
  truth.mu << 10.0, 20.0;
  truth.beta = Vector(2);
  truth.beta << 1.0, 0.5;
  truth.boundary = {0};
  Vector est(2);
  est << 11.0, 18.0;
  const auto s = score_replicate(truth, point_fit(est, {{1, 0, 1, 0.9, 1.1}, {0.6, 0, 0.6, 0.55, 0.7}}),
                                 full_matrix(g));
  CHECK(*s.pct_bias_mu == Approx(100.0 * (0.1 - 0.1) / 2));
  CHECK(*s.pct_rmse_mu == Approx(100.0 * std::sqrt((0.01 + 0.01) / 2)));
  CHECK(*s.pct_bias_beta == Approx(20.0));
  CHECK(*s.coverage_beta == 0.0);
  CHECK_FALSE(s.ba().has_value());

  truth.mu[1] = 0.0;
  truth.beta[1] = 0.0;
  const auto z = score_replicate(truth, point_fit(est, {{1, 0, 1, 0.9, 1.1}, {0.6, 0, 0.6, 0.55, 0.7}}),
                                 full_matrix(g));
  CHECK_FALSE(z.pct_bias_mu.has_value());
  CHECK_FALSE(z.pct_rmse_beta.has_value());
  CHECK(z.coverage_beta.has_value());

  const auto report = aggregate({s, z});
  CHECK_FALSE(report.pct_bias_mu.has_value());
  CHECK(format_metrics({report}).find("NA") != std::string::npos);
}

TEST_CASE("aggregate is order independent and pools counts") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::vector<ReplicateScore> scores(30);
  for (auto& s : scores) {
    s.pct_bias_mu = u(rng);
    s.pct_rmse_mu = std::abs(u(rng));
    s.pct_bias_beta = u(rng);
    s.pct_rmse_beta = std::abs(u(rng));
    s.coverage_beta = u(rng) > 0 ? 100.0 : 0.0;
    s.true_boundaries = 7;
    s.found_boundaries = static_cast<std::size_t>(rng() % 8);
    s.true_non_boundaries = 60;
    s.kept_non_boundaries = 55 + static_cast<std::size_t>(rng() % 6);
  }
  const auto a = aggregate(scores);
  std::reverse(scores.begin(), scores.end());
  std::shuffle(scores.begin(), scores.end(), rng);
  const auto b = aggregate(scores);
  CHECK(*a.pct_bias_mu == Approx(*b.pct_bias_mu).epsilon(1e-12));
  CHECK(*a.pct_rmse_beta == Approx(*b.pct_rmse_beta).epsilon(1e-12));
  CHECK(*a.ba == *b.ba);
  CHECK(*a.nba == *b.nba);
  CHECK(*a.coverage_beta >= 0.0);
  CHECK(*a.coverage_beta <= 100.0);
  CHECK(a.replicates == 30);
  CHECK_THROWS_AS(aggregate({}), ModelError);
}
