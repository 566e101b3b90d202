#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adaptcar/graph.hpp"
#include "adaptcar/inference.hpp"

namespace adaptcar {

/// Moran's I under binary weights; S0 counts each active edge twice.
/// Throws ModelError when the values have zero variance or no edge is active.
double morans_i(const Vector& values, const NeighbourMatrix& w);

/// Two-sided permutation p-value (1 + #{|I_perm| >= |I_obs|}) / (n_perm + 1).
/// Permutation i draws from its own stream derived from `seed`, so the result
/// does not depend on `threads`.
double moran_permutation_test(const Vector& values, const NeighbourMatrix& w, int n_perm,
                              std::uint64_t seed, unsigned threads = 1);

/// Sum of squared Pearson residuals over n - p.
double overdispersion(const ModelSpec& spec, const FitResult& fit);

struct Truth {
  Vector mu;
  Vector beta;                  // full coefficient vector, intercept first
  std::vector<Index> scored{};  // coefficients entering the beta metrics; default all but the intercept
  std::vector<std::uint8_t> boundary;  // per graph edge: 1 when the edge is a true boundary
};

/// Per-replicate record. Relative metrics are unavailable (nullopt) when a
/// true value is zero.
struct ReplicateScore {
  std::optional<double> pct_bias_mu;
  std::optional<double> pct_rmse_mu;
  std::optional<double> pct_bias_beta;
  std::optional<double> pct_rmse_beta;
  std::optional<double> coverage_beta;  // 100 when every scored beta lies in its 95% interval
  std::size_t true_boundaries = 0;
  std::size_t found_boundaries = 0;  // true boundaries removed in w_hat
  std::size_t true_non_boundaries = 0;
  std::size_t kept_non_boundaries = 0;  // true non-boundaries kept active in w_hat

  std::optional<double> ba() const;
  std::optional<double> nba() const;
};

/// Point estimates are posterior medians.
ReplicateScore score_replicate(const Truth& truth, const FitResult& fit, const NeighbourMatrix& w_hat);

struct MetricsReport {
  std::string model;
  std::size_t replicates = 0;
  std::optional<double> pct_bias_mu;
  std::optional<double> pct_rmse_mu;
  std::optional<double> pct_bias_beta;
  std::optional<double> pct_rmse_beta;
  std::optional<double> coverage_beta;
  std::optional<double> ba;
  std::optional<double> nba;
};

/// Bias and coverage average over replicates; RMSE is the root of the mean
/// squared value; BA and NBA pool edge counts. A metric is unavailable if it
/// is unavailable in any replicate.
MetricsReport aggregate(const std::vector<ReplicateScore>& scores, const std::string& model = "");

/// Delimited table with one row per metric and one column per model.
std::string format_metrics(const std::vector<MetricsReport>& reports, char delimiter = '\t');

}  // namespace adaptcar
