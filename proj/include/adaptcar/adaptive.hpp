#pragma once

#include <exception>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaptcar/graph.hpp"
#include "adaptcar/inference.hpp"

namespace adaptcar {

struct AdaptiveConfig {
  /// rho for the refits under each W; the initial fit always uses rho = 0.
  RhoMode rho_mode = RhoMode::fixed_at(0.99);
  int max_iterations = 50;
  GridConfig grid;

  void validate() const;
};

enum class Termination { SteadyState, Cycle, MaxIterations };
std::string to_string(Termination t);

struct AdaptiveState {
  int iteration = 0;
  NeighbourMatrix w;
  StateKey key;
  std::size_t boundaries = 0;
  /// Fit under w. A state that repeats an earlier key shares that state's fit.
  std::shared_ptr<const FitResult> fit;
  /// |.| of Moran's I of the Pearson residuals under w; NaN when undefined.
  double moran = 0.0;
};

struct AdaptiveTrace {
  std::shared_ptr<const FitResult> initial_fit;
  std::vector<AdaptiveState> states;
  Termination termination = Termination::MaxIterations;
  int cycle_length = 0;          // k for Termination::Cycle
  std::size_t selected_state = 0;  // index into states

  const NeighbourMatrix& selected() const { return states.at(selected_state).w; }
  const FitResult& final_fit() const { return *states.at(selected_state).fit; }
  /// Refits performed after the initial independence fit.
  int iterations() const;
};

/// Thrown when a fit fails mid-run; carries the trace up to the failure.
class AdaptiveFailure : public std::runtime_error {
 public:
  AdaptiveFailure(const std::string& what, AdaptiveTrace trace, std::exception_ptr cause)
      : std::runtime_error(what), trace_(std::move(trace)), cause_(cause) {}
  const AdaptiveTrace& trace() const { return trace_; }
  [[noreturn]] void rethrow_cause() const { std::rethrow_exception(cause_); }

 private:
  AdaptiveTrace trace_;
  std::exception_ptr cause_;
};

/// w_kj = 1 for an edge iff the closed 95% intervals of phi_k and phi_j overlap.
NeighbourMatrix update_w(const FitResult& fit, GraphPtr graph);

using Fitter = std::function<FitResult(const ModelSpec&, const NeighbourMatrix&)>;

/// Iterative estimation of W: independence fit, then alternate interval
/// updates and refits until a state repeats. A repeat of the previous state is
/// a steady state; an older repeat is a cycle, resolved by the smallest
/// |Moran's I| among the cycle states (all states after max_iterations).
AdaptiveTrace run(const ModelSpec& spec, GraphPtr graph, const AdaptiveConfig& config = {});
/// Same, with the inference step supplied by the caller.
AdaptiveTrace run(const ModelSpec& spec, GraphPtr graph, const AdaptiveConfig& config,
                  const Fitter& fitter);

struct BoundaryRow {
  std::size_t edge_id = 0;
  Edge edge;
  /// |R_k - R_j| of posterior-median risks (fitted values outside Poisson).
  double difference = 0.0;
};

struct BoundaryReport {
  BoundarySet boundaries;
  std::vector<BoundaryRow> rows;  // sorted by difference, largest first
  /// Posterior median of rho below 0.5: w_kj = 0 no longer reads as a step change.
  bool weak_interpretation = false;
};

BoundaryReport boundary_report(const AdaptiveTrace& trace);

/// "iter=<i> state=<hash> boundaries=<count> moran=<value>"
std::string trace_line(const AdaptiveState& state);

}  // namespace adaptcar
