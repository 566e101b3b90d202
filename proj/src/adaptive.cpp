#include "adaptcar/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "adaptcar/diagnostics.hpp"
#include "adaptcar/errors.hpp"

namespace adaptcar {

void AdaptiveConfig::validate() const {
  if (max_iterations < 1) throw ModelError("adaptive: max_iterations must be at least 1");
  if (rho_mode.fixed && !(rho_mode.value >= 0.0 && rho_mode.value < 1.0))
    throw ModelError("adaptive: fixed rho must lie in [0, 1)");
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::SteadyState: return "steady_state";
    case Termination::Cycle: return "cycle";
    case Termination::MaxIterations: return "max_iterations_exceeded";
  }
  return "?";
}

int AdaptiveTrace::iterations() const {
  // Only a terminating repeat shares its fit with an earlier state.
  const int n = static_cast<int>(states.size());
  return termination == Termination::MaxIterations ? n : n - 1;
}

NeighbourMatrix update_w(const FitResult& fit, GraphPtr graph) {
  const auto ci = credible_intervals_phi(fit);
  if (static_cast<Index>(ci.size()) != graph->size())
    throw ModelError("update_w: fit has " + std::to_string(ci.size()) + " intervals for " +
                     std::to_string(graph->size()) + " areas");
  std::vector<std::uint8_t> active(graph->edge_count(), 0);
  for (std::size_t e = 0; e < active.size(); ++e) {
    const auto& [lk, hk] = ci[graph->edge(e).a];
    const auto& [lj, hj] = ci[graph->edge(e).b];
    active[e] = lk <= hj && lj <= hk;
  }
  return NeighbourMatrix(std::move(graph), std::move(active));
}

namespace {

double abs_moran(const FitResult& fit, const NeighbourMatrix& w) {
  try {
    return std::abs(morans_i(fit.pearson_residuals, w));
  } catch (const ModelError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

// Smallest |Moran's I| among states[first, last); NaN ranks last, ties keep the earliest.
std::size_t min_moran(const std::vector<AdaptiveState>& states, std::size_t first, std::size_t last) {
  std::size_t best = first;
  for (std::size_t i = first + 1; i < last; ++i) {
    const double a = states[i].moran, b = states[best].moran;
    if (!std::isnan(a) && (std::isnan(b) || a < b)) best = i;
  }
  return best;
}

}  // namespace

AdaptiveTrace run(const ModelSpec& spec, GraphPtr graph, const AdaptiveConfig& config) {
  return run(spec, graph, config, [&](const ModelSpec& s, const NeighbourMatrix& w) {
    return fit(s, w, config.grid);
  });
}

AdaptiveTrace run(const ModelSpec& spec, GraphPtr graph, const AdaptiveConfig& config,
                  const Fitter& fitter) {
  config.validate();
  if (!graph) throw ModelError("adaptive: missing graph");
  if (graph->size() != spec.n())
    throw ModelError("adaptive: graph has " + std::to_string(graph->size()) + " areas, data has " +
                     std::to_string(spec.n()));
  if (!spec.random_effects) throw ModelError("adaptive: the model needs random effects");

  AdaptiveTrace trace;
  auto guarded = [&](const ModelSpec& s, const NeighbourMatrix& w) {
    try {
      return std::make_shared<const FitResult>(fitter(s, w));
    } catch (const std::exception& e) {
      throw AdaptiveFailure(e.what(), trace, std::current_exception());
    }
  };

  ModelSpec independent = spec;
  independent.rho_mode = RhoMode::fixed_at(0.0);
  trace.initial_fit = guarded(independent, full_matrix(graph));

  ModelSpec refit = spec;
  refit.rho_mode = config.rho_mode;

  std::shared_ptr<const FitResult> previous = trace.initial_fit;
  for (int it = 1; it <= config.max_iterations + 1; ++it) {
    AdaptiveState st{it, update_w(*previous, graph), {}, 0, nullptr, 0.0};
    st.key = state_key(st.w);
    st.boundaries = st.w.graph().edge_count() - st.w.active_count();

    // Fitting is deterministic, so a repeated key reuses the earlier fit.
    std::size_t match = trace.states.size();
    for (std::size_t j = 0; j < trace.states.size(); ++j)
      if (trace.states[j].key == st.key) {
        match = j;
        break;
      }
    if (match < trace.states.size()) {
      st.fit = trace.states[match].fit;
      st.moran = trace.states[match].moran;
      trace.states.push_back(std::move(st));
      const std::size_t last = trace.states.size() - 1;
      if (match + 1 == last) {
        trace.termination = Termination::SteadyState;
        trace.selected_state = last;
      } else {
        trace.termination = Termination::Cycle;
        trace.cycle_length = static_cast<int>(last - match);
        trace.selected_state = min_moran(trace.states, match, last);
      }
      return trace;
    }
    if (it > config.max_iterations) break;

    st.fit = guarded(refit, st.w);
    st.moran = abs_moran(*st.fit, st.w);
    previous = st.fit;
    trace.states.push_back(std::move(st));
  }
  // The extra update above found a new state; it is not refitted.
  trace.termination = Termination::MaxIterations;
  trace.selected_state = min_moran(trace.states, 0, trace.states.size());
  return trace;
}

BoundaryReport boundary_report(const AdaptiveTrace& trace) {
  BoundaryReport r;
  const NeighbourMatrix& w = trace.selected();
  const FitResult& fit = trace.final_fit();
  r.boundaries = boundaries(w);
  const auto& value = fit.risk.empty() ? fit.fitted : fit.risk;
  for (std::size_t i = 0; i < r.boundaries.size(); ++i) {
    const Edge& e = r.boundaries.edges[i];
    r.rows.push_back({r.boundaries.edge_ids[i], e, std::abs(value[e.a].median - value[e.b].median)});
  }
  std::stable_sort(r.rows.begin(), r.rows.end(),
                   [](const BoundaryRow& a, const BoundaryRow& b) { return a.difference > b.difference; });
  r.weak_interpretation = fit.rho && fit.rho->median < 0.5;
  return r;
}

std::string trace_line(const AdaptiveState& state) {
  std::ostringstream out;
  out << "iter=" << state.iteration << " state=" << state.key.digest()
      << " boundaries=" << state.boundaries << " moran=" << std::setprecision(6) << state.moran;
  return out.str();
}

}  // namespace adaptcar
