#include <algorithm>
#include <numeric>
#include <random>

#include "adaptcar/errors.hpp"
#include "adaptcar/numeric.hpp"
#include "adaptcar/study.hpp"
#include "doctest.h"

using namespace adaptcar;

namespace {

// 8x8 lattice with one 3x3 cluster: 12 true boundaries out of 112 edges.
Template small_template() {
  Template t;
  t.graph = make_lattice(8, 8);
  t.group.assign(64, 0);
  for (int i = 2; i < 5; ++i)
    for (int j = 3; j < 6; ++j) t.group[i * 8 + j] = 1;
  return t;
}

void check_same(const MetricsReport& a, const MetricsReport& b) {
  CHECK(a.model == b.model);
  CHECK(a.replicates == b.replicates);
  CHECK(a.pct_bias_mu == b.pct_bias_mu);
  CHECK(a.pct_rmse_mu == b.pct_rmse_mu);
  CHECK(a.pct_bias_beta == b.pct_bias_beta);
  CHECK(a.pct_rmse_beta == b.pct_rmse_beta);
  CHECK(a.coverage_beta == b.coverage_beta);
  CHECK(a.ba == b.ba);
  CHECK(a.nba == b.nba);
}

}  // namespace

TEST_CASE("one replicate, both models") {
  auto sc = scenario_a();
  sc.seed = 5;
  const Generator gen(small_template(), sc);
  StudyConfig cfg;
  cfg.replicates = 1;
  const auto res = run_study(gen, cfg);

  REQUIRE(res.records.size() == 1);
  CHECK(res.records[0].seed == derive_seed(5, 0));
  REQUIRE(res.failures == 0);
  REQUIRE(res.reports.size() == 2);
  CHECK(res.reports[0].model == "global-leroux");
  CHECK(res.reports[1].model == "adaptive");
  for (const auto& r : res.reports) {
    CHECK(r.replicates == 1);
    CHECK(r.pct_rmse_mu.has_value());
    CHECK(r.pct_rmse_beta.has_value());
    REQUIRE(r.coverage_beta.has_value());
    CHECK((*r.coverage_beta == 0.0 || *r.coverage_beta == 100.0));
  }
  // The global model never removes an edge.
  CHECK(*res.reports[0].ba == 0.0);
  CHECK(*res.reports[0].nba == 100.0);

  const auto& t = res.termination;
  CHECK(t.runs == 1);
  CHECK(t.histogram.size() == 50);
  CHECK(std::accumulate(t.histogram.begin(), t.histogram.end(), std::size_t{0}) == 1);
  CHECK(t.steady_state + t.cycle + t.max_iterations == 1);
}

TEST_CASE("aggregates do not depend on execution order") {
  auto sc = scenario_a();
  sc.include_covariate = false;
  sc.seed = 17;
  const Generator gen(small_template(), sc);
  StudyConfig cfg;
  cfg.replicates = 6;
  cfg.models = {StudyModel::Adaptive, StudyModel::GlobalLeroux};
  cfg.threads = 1;
  const auto serial = run_study(gen, cfg);
  cfg.threads = 3;
  const auto parallel = run_study(gen, cfg);

  REQUIRE(serial.reports.size() == 2);
  CHECK(serial.failures == parallel.failures);
  for (std::size_t m = 0; m < 2; ++m) check_same(serial.reports[m], parallel.reports[m]);
  CHECK(serial.termination.histogram == parallel.termination.histogram);

  auto shuffled = serial.records;
  std::mt19937_64 rng(3);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto again = summarize_study(shuffled, cfg);
  for (std::size_t m = 0; m < 2; ++m) check_same(serial.reports[m], again.reports[m]);
  for (std::size_t i = 0; i < again.records.size(); ++i) CHECK(again.records[i].index == i);
  // No covariate: only the intercept is estimated, so beta metrics are unavailable.
  CHECK_FALSE(serial.reports[0].pct_rmse_beta.has_value());
}

TEST_CASE("failed replicates are counted and excluded") {
  StudyConfig cfg;
  cfg.models = {StudyModel::Adaptive};
  ReplicateScore good;
  good.pct_bias_mu = 1.0;
  good.pct_rmse_mu = 2.0;
  good.true_boundaries = 10;
  good.found_boundaries = 9;
  good.true_non_boundaries = 100;
  good.kept_non_boundaries = 99;

  ReplicateRecord ok;
  ok.index = 0;
  ok.scores = {good};
  ok.termination = Termination::SteadyState;
  ok.iterations = 3;
  ReplicateRecord bad;
  bad.index = 1;
  bad.failed_model = "adaptive";
  bad.failure = "area 7 has no active neighbours";

  const auto res = summarize_study({bad, ok}, cfg);
  CHECK(res.failures == 1);
  CHECK(res.reports[0].replicates == 1);
  CHECK(*res.reports[0].ba == doctest::Approx(90.0));
  CHECK(res.termination.runs == 1);
  CHECK(res.termination.histogram[2] == 1);
  CHECK(res.termination.steady_fraction() == 1.0);
  CHECK_FALSE(res.records[1].ok());

  // Every replicate failed: the report exists but carries no metrics.
  const auto none = summarize_study({bad}, cfg);
  CHECK(none.reports[0].replicates == 0);
  CHECK_FALSE(none.reports[0].pct_rmse_mu.has_value());
}

TEST_CASE("scenario B has no boundary agreement") {
  auto sc = scenario_b();
  sc.include_covariate = false;
  const Generator gen(small_template(), sc);
  StudyConfig cfg;
  cfg.replicates = 2;
  cfg.models = {StudyModel::Adaptive};
  const auto res = run_study(gen, cfg);
  REQUIRE(res.failures < 2);
  CHECK_FALSE(res.reports[0].ba.has_value());
  CHECK(res.reports[0].nba.has_value());
}

TEST_CASE("study config validation") {
  StudyConfig cfg;
  cfg.replicates = 0;
  CHECK_THROWS_AS(cfg.validate(), ModelError);
  cfg = {};
  cfg.models.clear();
  CHECK_THROWS_AS(cfg.validate(), ModelError);
  cfg = {};
  cfg.models = {StudyModel::Adaptive, StudyModel::Adaptive};
  CHECK_THROWS_AS(cfg.validate(), ModelError);
  CHECK(parse_study_model("global-leroux") == StudyModel::GlobalLeroux);
  CHECK_THROWS_AS(parse_study_model("bym"), ModelError);
}
