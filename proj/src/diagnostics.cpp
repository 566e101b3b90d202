#include "adaptcar/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "adaptcar/errors.hpp"
#include "adaptcar/numeric.hpp"
#include "adaptcar/parallel.hpp"

namespace adaptcar {

namespace {

struct MoranKernel {
  std::vector<Edge> edges;
  double s0 = 0.0;

  explicit MoranKernel(const NeighbourMatrix& w) {
    for (std::size_t e = 0; e < w.graph().edge_count(); ++e)
      if (w.active(e)) edges.push_back(w.graph().edge(e));
    s0 = 2.0 * static_cast<double>(edges.size());
  }

  // Values are already centred.
  double operator()(const Vector& c, double ss) const {
    double cross = 0.0;
    for (const Edge& e : edges) cross += c[e.a] * c[e.b];
    return static_cast<double>(c.size()) / s0 * 2.0 * cross / ss;
  }
};

}  // namespace

double morans_i(const Vector& values, const NeighbourMatrix& w) {
  if (values.size() != w.size())
    throw ModelError("morans_i: " + std::to_string(values.size()) + " values for " +
                     std::to_string(w.size()) + " areas");
  if (values.size() < 2) throw ModelError("morans_i: need at least two areas");
  const MoranKernel kernel(w);
  if (kernel.edges.empty()) throw ModelError("morans_i: no active edges");
  const Vector c = values.array() - values.mean();
  const double ss = c.squaredNorm();
  if (!(ss > 0.0)) throw ModelError("morans_i: values have zero variance");
  return kernel(c, ss);
}

double moran_permutation_test(const Vector& values, const NeighbourMatrix& w, int n_perm,
                              std::uint64_t seed, unsigned threads) {
  if (n_perm < 0) throw ModelError("moran_permutation_test: negative permutation count");
  const double observed = std::abs(morans_i(values, w));
  const MoranKernel kernel(w);
  const Vector c = values.array() - values.mean();
  const double ss = c.squaredNorm();
  // Relative slack so that ties with the observed statistic count as extreme.
  const double threshold = observed * (1.0 - 1e-12);
  std::vector<std::uint8_t> extreme(static_cast<std::size_t>(n_perm), 0);
  parallel_for(extreme.size(), threads, [&](unsigned, std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    Vector perm = c;
    std::shuffle(perm.data(), perm.data() + perm.size(), rng);
    extreme[i] = std::abs(kernel(perm, ss)) >= threshold;
  });
  const auto hits = std::accumulate(extreme.begin(), extreme.end(), std::size_t{0});
  return (1.0 + static_cast<double>(hits)) / (n_perm + 1.0);
}

double overdispersion(const ModelSpec& spec, const FitResult& fit) {
  const Index n = spec.n(), p = spec.p();
  if (n <= p) throw ModelError("overdispersion: need more areas than regression coefficients");
  if (fit.pearson_residuals.size() != n)
    throw ModelError("overdispersion: fit does not match the model");
  return fit.pearson_residuals.squaredNorm() / static_cast<double>(n - p);
}

std::optional<double> ReplicateScore::ba() const {
  if (true_boundaries == 0) return std::nullopt;
  return 100.0 * static_cast<double>(found_boundaries) / static_cast<double>(true_boundaries);
}

std::optional<double> ReplicateScore::nba() const {
  if (true_non_boundaries == 0) return std::nullopt;
  return 100.0 * static_cast<double>(kept_non_boundaries) / static_cast<double>(true_non_boundaries);
}

ReplicateScore score_replicate(const Truth& truth, const FitResult& fit, const NeighbourMatrix& w_hat) {
  const Index n = fit.n();
  if (truth.mu.size() != n) throw ModelError("score_replicate: mu has the wrong length");
  if (truth.beta.size() != static_cast<Index>(fit.beta.size()))
    throw ModelError("score_replicate: beta has the wrong length");
  if (truth.boundary.size() != w_hat.graph().edge_count())
    throw ModelError("score_replicate: boundary flags do not match the graph");

  ReplicateScore s;
  bool mu_ok = true;
  double bias = 0.0, sq = 0.0;
  for (Index k = 0; k < n; ++k) {
    if (truth.mu[k] == 0.0) {
      mu_ok = false;
      break;
    }
    const double r = (fit.fitted[k].median - truth.mu[k]) / truth.mu[k];
    bias += r;
    sq += r * r;
  }
  if (mu_ok && n > 0) {
    s.pct_bias_mu = 100.0 * bias / static_cast<double>(n);
    s.pct_rmse_mu = 100.0 * std::sqrt(sq / static_cast<double>(n));
  }

  std::vector<Index> scored = truth.scored;
  if (scored.empty())
    for (Index j = 1; j < truth.beta.size(); ++j) scored.push_back(j);
  if (!scored.empty()) {
    bool ok = true;
    bool covered = true;
    bias = sq = 0.0;
    for (Index j : scored) {
      const double b = truth.beta[j];
      const Summary& est = fit.beta.at(static_cast<std::size_t>(j));
      covered = covered && est.lower <= b && b <= est.upper;
      if (b == 0.0) {
        ok = false;
        continue;
      }
      const double r = (est.median - b) / b;
      bias += r;
      sq += r * r;
    }
    const double m = static_cast<double>(scored.size());
    if (ok) {
      s.pct_bias_beta = 100.0 * bias / m;
      s.pct_rmse_beta = 100.0 * std::sqrt(sq / m);
    }
    s.coverage_beta = covered ? 100.0 : 0.0;
  }

  for (std::size_t e = 0; e < truth.boundary.size(); ++e) {
    if (truth.boundary[e]) {
      ++s.true_boundaries;
      s.found_boundaries += !w_hat.active(e);
    } else {
      ++s.true_non_boundaries;
      s.kept_non_boundaries += w_hat.active(e);
    }
  }
  return s;
}

MetricsReport aggregate(const std::vector<ReplicateScore>& scores, const std::string& model) {
  if (scores.empty()) throw ModelError("aggregate: no replicates");
  MetricsReport r;
  r.model = model;
  r.replicates = scores.size();
  const double m = static_cast<double>(scores.size());
  auto mean_of = [&](auto field, bool squared) -> std::optional<double> {
    double acc = 0.0;
    for (const auto& s : scores) {
      const std::optional<double>& v = s.*field;
      if (!v) return std::nullopt;
      acc += squared ? *v * *v : *v;
    }
    return squared ? std::sqrt(acc / m) : acc / m;
  };
  r.pct_bias_mu = mean_of(&ReplicateScore::pct_bias_mu, false);
  r.pct_rmse_mu = mean_of(&ReplicateScore::pct_rmse_mu, true);
  r.pct_bias_beta = mean_of(&ReplicateScore::pct_bias_beta, false);
  r.pct_rmse_beta = mean_of(&ReplicateScore::pct_rmse_beta, true);
  r.coverage_beta = mean_of(&ReplicateScore::coverage_beta, false);
  std::size_t tb = 0, fb = 0, tn = 0, kn = 0;
  for (const auto& s : scores) {
    tb += s.true_boundaries;
    fb += s.found_boundaries;
    tn += s.true_non_boundaries;
    kn += s.kept_non_boundaries;
  }
  if (tb > 0) r.ba = 100.0 * static_cast<double>(fb) / static_cast<double>(tb);
  if (tn > 0) r.nba = 100.0 * static_cast<double>(kn) / static_cast<double>(tn);
  return r;
}

std::string format_metrics(const std::vector<MetricsReport>& reports, char delimiter) {
  std::ostringstream out;
  out << "metric";
  for (const auto& r : reports) out << delimiter << (r.model.empty() ? "model" : r.model);
  out << '\n';
  auto row = [&](const char* name, auto get) {
    out << name;
    for (const auto& r : reports) {
      const std::optional<double> v = get(r);
      out << delimiter;
      if (v)
        out << std::fixed << std::setprecision(3) << *v;
      else
        out << "NA";
    }
    out << '\n';
  };
  row("pct_bias_mu", [](const MetricsReport& r) { return r.pct_bias_mu; });
  row("pct_rmse_mu", [](const MetricsReport& r) { return r.pct_rmse_mu; });
  row("pct_bias_beta", [](const MetricsReport& r) { return r.pct_bias_beta; });
  row("pct_rmse_beta", [](const MetricsReport& r) { return r.pct_rmse_beta; });
  row("coverage_beta", [](const MetricsReport& r) { return r.coverage_beta; });
  row("ba", [](const MetricsReport& r) { return r.ba; });
  row("nba", [](const MetricsReport& r) { return r.nba; });
  out << "replicates";
  for (const auto& r : reports) out << delimiter << r.replicates;
  out << '\n';
  return out.str();
}

}  // namespace adaptcar
