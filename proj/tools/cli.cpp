#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "adaptcar/adaptive.hpp"
#include "adaptcar/diagnostics.hpp"
#include "adaptcar/errors.hpp"
#include "adaptcar/io.hpp"
#include "adaptcar/mcmc.hpp"
#include "adaptcar/numeric.hpp"
#include "adaptcar/parallel.hpp"
#include "adaptcar/study.hpp"

namespace adaptcar::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string data, adjacency, centroids, tmpl;
  std::string out_dir = ".";
  std::uint64_t seed = 20120901;
  unsigned threads = 0;
  std::string backend = "laplace";
  std::string rho;  // empty = subcommand default
  std::string family = "poisson";
  std::size_t replicates = 100;
  std::string scenario = "A";
  std::optional<double> m;
  bool covariates = false;     // boundaries: keep covariate columns
  bool no_covariate = false;   // simulate: drop the generated covariate
  int max_iterations = 50;
  int mcmc_iterations = 20000;
  int burn_in = 10000;
  int permutations = 999;
  std::vector<std::string> models{"global-leroux", "adaptive"};
  std::size_t export_count = 0;
};

// Everything that can change the results, in a fixed order. Paths and the
// thread count are left out.
class ConfigText {
 public:
  ConfigText& add(const std::string& key, const std::string& value) {
    text_ += key + "=" + value + ";";
    return *this;
  }
  ConfigText& add(const std::string& key, double value) { return add(key, format_number(value)); }
  std::string digest() const { return digest_hex(text_); }

 private:
  std::string text_;
};

class Writer {
 public:
  Writer(const Options& o, std::string command, std::string digest)
      : dir_(o.out_dir), prov_{o.seed, std::move(digest), std::move(command)} {
    fs::create_directories(dir_);
  }

  void file(const std::string& name, const std::string& body) const {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
    f << provenance_header(prov_) << body;
  }

 private:
  fs::path dir_;
  Provenance prov_;
};

template <typename F>
std::string render(F&& f) {
  std::ostringstream s;
  f(s);
  return s.str();
}

RhoMode rho_mode(const Options& o, RhoMode fallback) {
  return o.rho.empty() ? fallback : parse_rho_mode(o.rho);
}

GridConfig grid_config(const Options& o) {
  GridConfig g;
  g.seed = o.seed;
  g.threads = o.threads;
  return g;
}

McmcConfig mcmc_config(const Options& o) {
  McmcConfig c;
  c.iterations = o.mcmc_iterations;
  c.burn_in = o.burn_in;
  c.seed = o.seed;
  return c;
}

Fitter make_fitter(const Options& o) {
  if (o.backend == "mcmc") {
    const McmcConfig c = mcmc_config(o);
    return [c](const ModelSpec& s, const NeighbourMatrix& w) { return fit_mcmc(s, w, c); };
  }
  const GridConfig g = grid_config(o);
  return [g](const ModelSpec& s, const NeighbourMatrix& w) { return fit(s, w, g); };
}

void add_backend(ConfigText& c, const Options& o) {
  c.add("backend", o.backend);
  if (o.backend == "mcmc") c.add("mcmc_iterations", o.mcmc_iterations).add("burn_in", o.burn_in);
}

struct Loaded {
  DataTable data;
  GraphPtr graph;
  Family family;
};

Loaded load_inputs(const Options& o) {
  if (o.data.empty() || o.adjacency.empty())
    throw CLI::RequiredError("--data and --adjacency");
  Loaded l;
  l.family = parse_family(o.family);
  l.data = load_data(o.data, l.family);
  l.graph = load_graph(o.adjacency, l.data.n(), o.centroids);
  return l;
}

// Moran's I of `values` under w with its permutation p-value; NA when undefined.
std::pair<std::string, std::string> moran_text(const Vector& values, const NeighbourMatrix& w,
                                               const Options& o) {
  try {
    const double i = morans_i(values, w);
    const double p = moran_permutation_test(values, w, o.permutations, derive_seed(o.seed, 1), o.threads);
    return {format_number(i), format_number(p)};
  } catch (const ModelError&) {
    return {"NA", "NA"};
  }
}

int cmd_fit(const Options& o, std::ostream& out) {
  const auto in = load_inputs(o);
  ModelSpec spec = in.data.spec(in.family, rho_mode(o, RhoMode::estimate()));
  spec.validate();
  ConfigText cfg;
  cfg.add("command", "fit").add("family", o.family).add("rho", to_string(spec.rho_mode));
  add_backend(cfg, o);
  cfg.add("permutations", o.permutations);
  const Writer writer(o, "fit", cfg.digest());

  const auto w = full_matrix(in.graph);
  const FitResult res = make_fitter(o)(spec, w);
  const auto [moran, p] = moran_text(res.pearson_residuals, w, o);
  const double od = overdispersion(spec, res);

  writer.file("fit.tsv", render([&](std::ostream& s) { write_fit(s, res); }));
  writer.file("diagnostics.tsv", render([&](std::ostream& s) {
    s << "dic\t" << format_number(res.dic) << "\n";
    s << "p_d\t" << format_number(res.p_d) << "\n";
    s << "overdispersion\t" << format_number(od) << "\n";
    s << "moran_residuals\t" << moran << "\n";
    s << "moran_p_value\t" << p << "\n";
    s << "permutations\t" << o.permutations << "\n";
  }));
  out << "areas=" << spec.n() << " dic=" << format_number(res.dic) << " p_d=" << format_number(res.p_d)
      << " overdispersion=" << format_number(od) << " moran=" << moran << " p=" << p << "\n";
  return kSuccess;
}

int cmd_boundaries(const Options& o, std::ostream& out, std::ostream& err) {
  const auto in = load_inputs(o);
  DataTable data = in.data;
  if (!o.covariates) {
    data.covariates.resize(data.n(), 0);
    data.covariate_names.clear();
  }
  const RhoMode rho = rho_mode(o, RhoMode::fixed_at(0.99));
  ModelSpec spec = data.spec(in.family, rho);
  spec.validate();
  ConfigText cfg;
  cfg.add("command", "boundaries").add("family", o.family).add("rho", to_string(rho));
  cfg.add("covariates", o.covariates ? "yes" : "no").add("max_iterations", o.max_iterations);
  add_backend(cfg, o);
  const Writer writer(o, "boundaries", cfg.digest());

  AdaptiveConfig ac;
  ac.rho_mode = rho;
  ac.max_iterations = o.max_iterations;
  ac.grid = grid_config(o);
  auto trace_text = [](const AdaptiveTrace& t) {
    std::string s;
    for (const auto& st : t.states) s += trace_line(st) + "\n";
    return s;
  };

  AdaptiveTrace trace;
  try {
    trace = run(spec, in.graph, ac, make_fitter(o));
  } catch (const AdaptiveFailure& f) {
    const std::string lines = trace_text(f.trace());
    out << lines;
    writer.file("trace.log", lines + "failed: " + f.what() + "\n");
    f.rethrow_cause();
  }
  const std::string lines = trace_text(trace);
  out << lines;
  const auto report = boundary_report(trace);
  writer.file("trace.log", lines + "termination=" + to_string(trace.termination) +
                               " iterations=" + std::to_string(trace.iterations()) +
                               " cycle_length=" + std::to_string(trace.cycle_length) +
                               " selected=" + std::to_string(trace.states[trace.selected_state].iteration) + "\n");
  writer.file("boundaries.adj", render([&](std::ostream& s) { write_edge_list(s, report.boundaries.edges); }));
  writer.file("boundaries.tsv", render([&](std::ostream& s) { write_boundary_table(s, report); }));
  writer.file("fit.tsv", render([&](std::ostream& s) { write_fit(s, trace.final_fit()); }));
  if (report.weak_interpretation)
    err << "warning: posterior median of rho is below 0.5; removed edges do not indicate step changes\n";
  out << "termination=" << to_string(trace.termination) << " iterations=" << trace.iterations()
      << " boundaries=" << report.boundaries.size() << "\n";
  return kSuccess;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  Template tmpl;
  if (!o.tmpl.empty()) {
    if (o.adjacency.empty()) throw CLI::RequiredError("--adjacency (with --template)");
    tmpl = load_template(o.tmpl, o.adjacency);
  } else {
    tmpl = default_template();
  }
  SimScenario sc = o.scenario == "B" ? scenario_b() : scenario_a();
  if (o.m) sc.m = *o.m;
  sc.include_covariate = !o.no_covariate;
  sc.seed = o.seed;
  const Generator gen(tmpl, sc);

  StudyConfig study;
  study.replicates = o.replicates;
  study.models.clear();
  for (const auto& name : o.models) study.models.push_back(parse_study_model(name));
  study.max_iterations = o.max_iterations;
  study.grid.seed = o.seed;
  study.threads = o.threads;
  study.validate();

  ConfigText cfg;
  cfg.add("command", "simulate").add("scenario", o.scenario).add("m", sc.m);
  cfg.add("covariate", sc.include_covariate ? "yes" : "no").add("replicates", o.replicates);
  for (const auto& name : o.models) cfg.add("model", name);
  cfg.add("max_iterations", o.max_iterations);
  cfg.add("template", render([&](std::ostream& s) {
    write_template(s, tmpl);
    write_edge_list(s, tmpl.graph->edges());
  }));
  const Writer writer(o, "simulate", cfg.digest());

  const auto res = run_study(gen, study);
  writer.file("metrics.tsv", format_metrics(res.reports));
  writer.file("replicates.tsv", render([&](std::ostream& s) {
    s << "replicate\tseed";
    for (auto m : study.models) s << '\t' << to_string(m) << ".pct_rmse_mu\t" << to_string(m) << ".ba\t" << to_string(m) << ".nba";
    s << "\ttermination\titerations\tboundaries\tfailure\n";
    auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("NA"); };
    for (const auto& r : res.records) {
      s << r.index << '\t' << r.seed;
      for (std::size_t m = 0; m < study.models.size(); ++m) {
        if (r.ok())
          s << '\t' << opt(r.scores[m].pct_rmse_mu) << '\t' << opt(r.scores[m].ba()) << '\t' << opt(r.scores[m].nba());
        else
          s << "\tNA\tNA\tNA";
      }
      s << '\t' << (r.termination ? to_string(*r.termination) : "NA") << '\t' << r.iterations << '\t'
        << r.boundaries << '\t' << (r.ok() ? "" : r.failed_model + ": " + r.failure) << '\n';
    }
  }));
  const auto& t = res.termination;
  writer.file("termination.tsv", render([&](std::ostream& s) {
    s << "runs\t" << t.runs << "\nsteady_state\t" << t.steady_state << "\ncycle\t" << t.cycle
      << "\nmax_iterations_exceeded\t" << t.max_iterations << "\nsteady_fraction\t"
      << format_number(t.steady_fraction()) << "\nmax_cycle_length\t" << t.max_cycle_length
      << "\nfailures\t" << res.failures << "\n\niterations\tcount\n";
    for (std::size_t i = 0; i < t.histogram.size(); ++i) s << i + 1 << '\t' << t.histogram[i] << '\n';
  }));

  if (o.export_count > 0) {
    writer.file("template.csv", render([&](std::ostream& s) { write_template(s, tmpl); }));
    writer.file("template.adj", render([&](std::ostream& s) { write_edge_list(s, tmpl.graph->edges()); }));
    for (std::size_t i = 0; i < std::min(o.export_count, o.replicates); ++i) {
      std::mt19937_64 rng(derive_seed(sc.seed, i));
      const SimData d = gen.generate(rng);
      ModelSpec spec = poisson_spec(d.y, d.offset, sc.include_covariate ? Matrix(d.design.rightCols(1)) : Matrix());
      spec.covariate_names = d.covariate_names;
      writer.file("data_" + std::to_string(i) + ".csv", render([&](std::ostream& s) { write_data(s, spec); }));
    }
  }
  out << format_metrics(res.reports) << "failures=" << res.failures
      << " steady_fraction=" << format_number(t.steady_fraction()) << "\n";
  return kSuccess;
}

int cmd_diagnose(const Options& o, std::ostream& out) {
  const auto in = load_inputs(o);
  ModelSpec spec = in.data.spec(in.family, RhoMode::fixed_at(0.0));
  spec.random_effects = false;
  spec.validate();
  ConfigText cfg;
  cfg.add("command", "diagnose").add("family", o.family).add("permutations", o.permutations);
  const Writer writer(o, "diagnose", cfg.digest());

  const auto w = full_matrix(in.graph);
  const FitResult glm = fit(spec, w, grid_config(o));
  const double od = overdispersion(spec, glm);
  const auto [moran, p] = moran_text(glm.pearson_residuals, w, o);
  writer.file("diagnose.tsv", render([&](std::ostream& s) {
    s << "model\tcovariates only, no random effects\n";
    for (std::size_t j = 0; j < glm.beta.size(); ++j)
      s << "beta." << glm.beta_names[j] << "\t" << format_number(glm.beta[j].median) << "\n";
    s << "dic\t" << format_number(glm.dic) << "\n";
    s << "overdispersion\t" << format_number(od) << "\n";
    s << "moran_residuals\t" << moran << "\n";
    s << "moran_p_value\t" << p << "\n";
    s << "permutations\t" << o.permutations << "\n";
  }));
  out << "overdispersion=" << format_number(od) << " moran=" << moran << " p=" << p << "\n";
  return kSuccess;
}

void add_inputs(CLI::App* sub, Options& o) {
  sub->add_option("--data", o.data, "Data file: area_id, y, offset[, trials], covariates...");
  sub->add_option("--adjacency", o.adjacency, "Edge list, one 'k j' pair per line");
  sub->add_option("--centroids", o.centroids, "Optional centroid file 'k x y'");
  sub->add_option("--family", o.family, "Likelihood")->check(CLI::IsMember({"poisson", "binomial", "gaussian"}));
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--out-dir", o.out_dir, "Directory for output files");
  sub->add_option("--seed", o.seed, "Seed recorded in every output");
  sub->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
}

void add_backend_opts(CLI::App* sub, Options& o) {
  sub->add_option("--backend", o.backend, "Inference engine")->check(CLI::IsMember({"laplace", "mcmc"}));
  sub->add_option("--mcmc-iterations", o.mcmc_iterations, "MCMC iterations")->check(CLI::PositiveNumber);
  sub->add_option("--burn-in", o.burn_in, "MCMC burn-in")->check(CLI::NonNegativeNumber);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Locally adaptive CAR smoothing and boundary detection", "adaptcar"};
  app.require_subcommand(1);

  auto* fit_cmd = app.add_subcommand("fit", "Fit the model under the full neighbourhood matrix");
  add_inputs(fit_cmd, o);
  add_common(fit_cmd, o);
  add_backend_opts(fit_cmd, o);
  fit_cmd->add_option("--rho", o.rho, "estimate | fixed:<v> (default estimate)");
  fit_cmd->add_option("--permutations", o.permutations, "Moran permutations")->check(CLI::NonNegativeNumber);

  auto* bnd = app.add_subcommand("boundaries", "Iteratively estimate W and report boundaries");
  add_inputs(bnd, o);
  add_common(bnd, o);
  add_backend_opts(bnd, o);
  bnd->add_option("--rho", o.rho, "estimate | fixed:<v> (default fixed:0.99)");
  bnd->add_flag("--covariates", o.covariates, "Keep covariate columns (weakens the boundary reading)");
  bnd->add_option("--max-iterations", o.max_iterations, "Iteration cap")->check(CLI::PositiveNumber);

  auto* sim = app.add_subcommand("simulate", "Simulation study against the global model");
  add_common(sim, o);
  sim->add_option("--template", o.tmpl, "Template file: area_id, x, y, group");
  sim->add_option("--adjacency", o.adjacency, "Edge list for --template");
  sim->add_option("--scenario", o.scenario, "A (step changes) or B (smooth)")->check(CLI::IsMember({"A", "B"}));
  sim->add_option("--m", o.m, "Cluster elevation (overrides the scenario)")->check(CLI::NonNegativeNumber);
  sim->add_option("--replicates", o.replicates, "Number of data sets")->check(CLI::PositiveNumber);
  sim->add_flag("--no-covariate", o.no_covariate, "Generate and fit without the covariate");
  sim->add_option("--models", o.models, "global-leroux and/or adaptive")
      ->check(CLI::IsMember({"global-leroux", "adaptive"}));
  sim->add_option("--max-iterations", o.max_iterations, "Adaptive iteration cap")->check(CLI::PositiveNumber);
  sim->add_option("--export", o.export_count, "Also write the first N data sets");

  auto* diag = app.add_subcommand("diagnose", "Overdispersion and residual spatial autocorrelation");
  add_inputs(diag, o);
  add_common(diag, o);
  diag->add_option("--permutations", o.permutations, "Moran permutations")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    if (o.threads == 0) o.threads = resolve_threads(0);
    if (*fit_cmd) return cmd_fit(o, out);
    if (*bnd) return cmd_boundaries(o, out, err);
    if (*sim) return cmd_simulate(o, out);
    return cmd_diagnose(o, out);
  } catch (const CLI::Error& e) {
    err << "error: missing " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kParse;
  } catch (const ModelError& e) {
    err << "model error: " << e.what() << "\n";
    return kModel;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace adaptcar::cli
