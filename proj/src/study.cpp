#include "adaptcar/study.hpp"

#include <algorithm>
#include <exception>

#include "adaptcar/errors.hpp"
#include "adaptcar/numeric.hpp"
#include "adaptcar/parallel.hpp"

namespace adaptcar {

std::string to_string(StudyModel m) {
  return m == StudyModel::GlobalLeroux ? "global-leroux" : "adaptive";
}

StudyModel parse_study_model(const std::string& text) {
  if (text == "global-leroux" || text == "global") return StudyModel::GlobalLeroux;
  if (text == "adaptive") return StudyModel::Adaptive;
  throw ModelError("unknown study model '" + text + "'");
}

void StudyConfig::validate() const {
  if (replicates < 1) throw ModelError("study: need at least one replicate");
  if (models.empty()) throw ModelError("study: no models selected");
  for (std::size_t i = 0; i < models.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (models[i] == models[j]) throw ModelError("study: model listed twice: " + to_string(models[i]));
  if (max_iterations < 1) throw ModelError("study: max_iterations must be >= 1");
}

double TerminationStats::steady_fraction() const {
  return runs == 0 ? 0.0 : static_cast<double>(steady_state) / static_cast<double>(runs);
}

namespace {

ReplicateRecord run_replicate(const Generator& gen, const StudyConfig& config, std::size_t index) {
  ReplicateRecord rec;
  rec.index = index;
  rec.seed = derive_seed(gen.scenario().seed, index);
  std::mt19937_64 rng(rec.seed);
  const SimData data = gen.generate(rng);
  const auto graph = gen.tmpl().graph;
  const bool cov = gen.scenario().include_covariate;

  ModelSpec spec = poisson_spec(data.y, data.offset, cov ? Matrix(data.design.rightCols(1)) : Matrix());
  GridConfig grid = config.grid;
  grid.threads = 1;
  const Truth truth{data.mu, data.beta, {}, data.boundary};

  std::vector<ReplicateScore> scores;
  for (StudyModel model : config.models) {
    try {
      if (model == StudyModel::GlobalLeroux) {
        ModelSpec g = spec;
        g.rho_mode = RhoMode::estimate();
        const auto w = full_matrix(graph);
        scores.push_back(score_replicate(truth, fit(g, w, grid), w));
      } else {
        AdaptiveConfig ac;
        ac.rho_mode = config.adaptive_rho.value_or(cov ? RhoMode::estimate() : RhoMode::fixed_at(0.99));
        ac.max_iterations = config.max_iterations;
        ac.grid = grid;
        const auto trace = run(spec, graph, ac);
        rec.termination = trace.termination;
        rec.iterations = trace.iterations();
        rec.cycle_length = trace.cycle_length;
        rec.boundaries = trace.states[trace.selected_state].boundaries;
        scores.push_back(score_replicate(truth, trace.final_fit(), trace.selected()));
      }
    } catch (const std::exception& e) {
      // Programming errors are not replicate failures.
      if (dynamic_cast<const std::logic_error*>(&e) && !dynamic_cast<const ModelError*>(&e)) throw;
      rec.failed_model = to_string(model);
      rec.failure = e.what();
      rec.termination.reset();
      return rec;
    }
  }
  rec.scores = std::move(scores);
  return rec;
}

}  // namespace

StudyResult summarize_study(std::vector<ReplicateRecord> records, const StudyConfig& config) {
  std::sort(records.begin(), records.end(),
            [](const ReplicateRecord& a, const ReplicateRecord& b) { return a.index < b.index; });
  StudyResult out;
  std::vector<std::vector<ReplicateScore>> per_model(config.models.size());
  const bool adaptive =
      std::find(config.models.begin(), config.models.end(), StudyModel::Adaptive) != config.models.end();
  if (adaptive) out.termination.histogram.assign(static_cast<std::size_t>(config.max_iterations), 0);

  for (const auto& r : records) {
    if (!r.ok()) {
      ++out.failures;
      continue;
    }
    for (std::size_t m = 0; m < config.models.size(); ++m) per_model[m].push_back(r.scores.at(m));
    if (adaptive && r.termination) {
      auto& t = out.termination;
      ++t.runs;
      switch (*r.termination) {
        case Termination::SteadyState: ++t.steady_state; break;
        case Termination::Cycle: ++t.cycle; break;
        case Termination::MaxIterations: ++t.max_iterations; break;
      }
      const int bin = std::clamp(r.iterations, 1, config.max_iterations);
      ++t.histogram[static_cast<std::size_t>(bin - 1)];
      t.max_cycle_length = std::max(t.max_cycle_length, r.cycle_length);
    }
  }
  for (std::size_t m = 0; m < config.models.size(); ++m) {
    const std::string name = to_string(config.models[m]);
    if (per_model[m].empty()) {
      MetricsReport empty;
      empty.model = name;
      out.reports.push_back(empty);
    } else {
      out.reports.push_back(aggregate(per_model[m], name));
    }
  }
  out.records = std::move(records);
  return out;
}

StudyResult run_study(const Generator& generator, const StudyConfig& config) {
  config.validate();
  std::vector<ReplicateRecord> records(config.replicates);
  parallel_for(config.replicates, config.threads,
               [&](unsigned, std::size_t i) { records[i] = run_replicate(generator, config, i); });
  return summarize_study(std::move(records), config);
}

}  // namespace adaptcar
