#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adaptcar/adaptive.hpp"
#include "adaptcar/diagnostics.hpp"
#include "adaptcar/simulate.hpp"

namespace adaptcar {

enum class StudyModel { GlobalLeroux, Adaptive };
std::string to_string(StudyModel m);  // "global-leroux" / "adaptive"
StudyModel parse_study_model(const std::string& text);

struct StudyConfig {
  std::size_t replicates = 100;
  std::vector<StudyModel> models{StudyModel::GlobalLeroux, StudyModel::Adaptive};
  /// rho for the adaptive refits. Unset: fixed at 0.99 without a covariate,
  /// estimated with one.
  std::optional<RhoMode> adaptive_rho;
  int max_iterations = 50;
  /// Per-fit grid; its thread count is ignored because replicates run in parallel.
  GridConfig grid;
  unsigned threads = 1;

  void validate() const;
};

struct ReplicateRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  /// Aligned with StudyConfig::models; empty when the replicate failed.
  std::vector<ReplicateScore> scores;
  std::string failed_model;
  std::string failure;
  // Adaptive model only.
  std::optional<Termination> termination;
  int iterations = 0;
  int cycle_length = 0;
  std::size_t boundaries = 0;

  bool ok() const { return failure.empty(); }
};

struct TerminationStats {
  std::size_t runs = 0;
  std::size_t steady_state = 0;
  std::size_t cycle = 0;
  std::size_t max_iterations = 0;
  /// histogram[i-1] counts runs that ended after i refits, i = 1..max_iterations.
  std::vector<std::size_t> histogram;
  int max_cycle_length = 0;

  double steady_fraction() const;
};

struct StudyResult {
  std::vector<MetricsReport> reports;  // one per model, successful replicates only
  std::vector<ReplicateRecord> records;  // replicate order
  std::size_t failures = 0;
  TerminationStats termination;  // empty unless the adaptive model ran
};

/// Replicate i draws from derive_seed(scenario.seed, i). A replicate on which
/// any model throws is recorded with the error and excluded from every
/// report, so the models are compared on the same data sets.
StudyResult run_study(const Generator& generator, const StudyConfig& config);

/// Aggregation step of run_study; records may come in any order.
StudyResult summarize_study(std::vector<ReplicateRecord> records, const StudyConfig& config);

}  // namespace adaptcar
