#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "adaptcar/adaptive.hpp"
#include "adaptcar/diagnostics.hpp"
#include "adaptcar/errors.hpp"
#include "adaptcar/mcmc.hpp"
#include "adaptcar/simulate.hpp"

namespace py = pybind11;
using namespace adaptcar;

namespace {

struct PyGraph {
  GraphPtr ptr;
};

py::dict summary(const Summary& s) {
  py::dict d;
  d["mean"] = s.mean;
  d["sd"] = s.sd;
  d["median"] = s.median;
  d["lower"] = s.lower;
  d["upper"] = s.upper;
  return d;
}

// Column-wise arrays of a per-area summary.
py::dict columns(const std::vector<Summary>& v) {
  Vector med(v.size()), lo(v.size()), hi(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    med[k] = v[k].median;
    lo[k] = v[k].lower;
    hi[k] = v[k].upper;
  }
  py::dict d;
  d["median"] = med;
  d["lower"] = lo;
  d["upper"] = hi;
  return d;
}

py::dict to_dict(const FitResult& f) {
  py::dict d;
  d["backend"] = f.backend;
  d["family"] = to_string(f.family);
  py::dict beta;
  for (std::size_t j = 0; j < f.beta.size(); ++j) beta[py::str(f.beta_names[j])] = summary(f.beta[j]);
  d["beta"] = beta;
  if (!f.phi.empty()) d["phi"] = columns(f.phi);
  d["fitted"] = columns(f.fitted);
  if (!f.risk.empty()) d["risk"] = columns(f.risk);
  d["rho"] = f.rho ? py::object(summary(*f.rho)) : py::none();
  d["tau"] = f.tau ? py::object(summary(*f.tau)) : py::none();
  d["sigma"] = f.sigma ? py::object(summary(*f.sigma)) : py::none();
  d["pearson_residuals"] = f.pearson_residuals;
  d["dic"] = f.dic;
  d["p_d"] = f.p_d;
  d["mean_deviance"] = f.mean_deviance;
  return d;
}

ModelSpec make_spec(const Vector& y, std::optional<Vector> offset, std::optional<Matrix> x,
                    const std::string& family, const std::string& rho, std::optional<Vector> trials) {
  const Index n = y.size();
  ModelSpec s;
  s.family = parse_family(family);
  s.y = y;
  s.offset = offset.value_or(Vector::Zero(n));
  if (trials) s.trials = *trials;
  const Index q = x ? x->cols() : 0;
  if (x && x->rows() != n) throw ModelError("covariates must have one row per area");
  s.design.resize(n, 1 + q);
  s.design.col(0).setOnes();
  if (q > 0) s.design.rightCols(q) = *x;
  s.rho_mode = parse_rho_mode(rho);
  s.validate();
  return s;
}

NeighbourMatrix weights(const PyGraph& g, std::optional<std::vector<bool>> active) {
  auto w = full_matrix(g.ptr);
  if (active) {
    if (active->size() != g.ptr->edge_count()) throw ModelError("active flags must have one entry per edge");
    for (std::size_t e = 0; e < active->size(); ++e) w.set(e, (*active)[e]);
  }
  return w;
}

std::vector<std::pair<Index, Index>> edge_pairs(const std::vector<Edge>& edges) {
  std::vector<std::pair<Index, Index>> out;
  for (const Edge& e : edges) out.emplace_back(e.a, e.b);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Locally adaptive CAR models: fitting, boundary detection and simulation";
  m.attr("__version__") = ADAPTCAR_VERSION;

  py::register_exception<ModelError>(m, "ModelError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  py::class_<PyGraph>(m, "Graph")
      .def(py::init([](Index n, const std::vector<std::pair<Index, Index>>& edges,
                       std::optional<std::vector<std::pair<double, double>>> coords) {
             std::vector<Edge> e;
             for (auto [a, b] : edges) e.emplace_back(a, b);
             std::optional<std::vector<Point>> pts;
             if (coords) {
               pts.emplace();
               for (auto [x, y] : *coords) pts->push_back({x, y});
             }
             return PyGraph{std::make_shared<const AdjacencyGraph>(n, e, pts)};
           }),
           py::arg("n"), py::arg("edges"), py::arg("coords") = py::none())
      .def_static("lattice", [](Index rows, Index cols) { return PyGraph{make_lattice(rows, cols)}; })
      .def_property_readonly("n", [](const PyGraph& g) { return g.ptr->size(); })
      .def_property_readonly("edges", [](const PyGraph& g) { return edge_pairs(g.ptr->edges()); })
      .def("__len__", [](const PyGraph& g) { return g.ptr->size(); });

  m.def(
      "fit",
      [](const PyGraph& g, const Vector& y, std::optional<Vector> offset, std::optional<Matrix> x,
         const std::string& family, const std::string& rho, std::optional<Vector> trials,
         const std::string& backend, std::uint64_t seed, unsigned threads, int iterations, int burn_in) {
        const ModelSpec spec = make_spec(y, offset, x, family, rho, trials);
        const auto w = full_matrix(g.ptr);
        FitResult res;
        if (backend != "laplace" && backend != "mcmc") throw ModelError("backend must be 'laplace' or 'mcmc'");
        {
          py::gil_scoped_release release;
          if (backend == "mcmc") {
            McmcConfig c;
            c.seed = seed;
            c.iterations = iterations;
            c.burn_in = burn_in;
            res = fit_mcmc(spec, w, c);
          } else {
            GridConfig c;
            c.seed = seed;
            c.threads = threads;
            res = fit(spec, w, c);
          }
        }
        return to_dict(res);
      },
      py::arg("graph"), py::arg("y"), py::arg("offset") = py::none(), py::arg("covariates") = py::none(),
      py::arg("family") = "poisson", py::arg("rho") = "estimate", py::arg("trials") = py::none(),
      py::arg("backend") = "laplace", py::arg("seed") = 20120901, py::arg("threads") = 1,
      py::arg("iterations") = 20000, py::arg("burn_in") = 10000);

  m.def(
      "boundaries",
      [](const PyGraph& g, const Vector& y, std::optional<Vector> offset, std::optional<Matrix> x,
         const std::string& rho, int max_iterations, std::uint64_t seed) {
        const ModelSpec spec = make_spec(y, offset, x, "poisson", rho, std::nullopt);
        AdaptiveConfig ac;
        ac.rho_mode = spec.rho_mode;
        ac.max_iterations = max_iterations;
        ac.grid.seed = seed;
        const auto trace = run(spec, g.ptr, ac);
        const auto report = boundary_report(trace);
        py::dict d;
        d["termination"] = to_string(trace.termination);
        d["iterations"] = trace.iterations();
        d["cycle_length"] = trace.cycle_length;
        std::vector<std::string> lines;
        for (const auto& s : trace.states) lines.push_back(trace_line(s));
        d["trace"] = lines;
        d["boundaries"] = edge_pairs(report.boundaries.edges);
        std::vector<double> diff;
        for (const auto& r : report.rows) diff.push_back(r.difference);
        std::vector<Edge> row_edges;
        for (const auto& r : report.rows) row_edges.push_back(r.edge);
        d["ranked_boundaries"] = edge_pairs(row_edges);
        d["risk_differences"] = diff;
        d["active"] = std::vector<bool>(trace.selected().flags().begin(), trace.selected().flags().end());
        d["fit"] = to_dict(trace.final_fit());
        return d;
      },
      py::arg("graph"), py::arg("y"), py::arg("offset") = py::none(), py::arg("covariates") = py::none(),
      py::arg("rho") = "fixed:0.99", py::arg("max_iterations") = 50, py::arg("seed") = 20120901);

  m.def(
      "morans_i",
      [](const Vector& values, const PyGraph& g, std::optional<std::vector<bool>> active) {
        return morans_i(values, weights(g, active));
      },
      py::arg("values"), py::arg("graph"), py::arg("active") = py::none());

  m.def(
      "moran_test",
      [](const Vector& values, const PyGraph& g, int permutations, std::uint64_t seed) {
        const auto w = full_matrix(g.ptr);
        return py::make_tuple(morans_i(values, w), moran_permutation_test(values, w, permutations, seed));
      },
      py::arg("values"), py::arg("graph"), py::arg("permutations") = 999, py::arg("seed") = 1);

  m.def(
      "simulate",
      [](const std::string& scenario, std::uint64_t seed, bool covariate) {
        if (scenario != "A" && scenario != "B") throw ModelError("scenario must be 'A' or 'B'");
        SimScenario sc = scenario == "B" ? scenario_b() : scenario_a();
        sc.include_covariate = covariate;
        const Generator gen(default_template(), sc);
        std::mt19937_64 rng(seed);
        const SimData d = gen.generate(rng);
        py::dict out;
        out["graph"] = PyGraph{gen.tmpl().graph};
        out["y"] = d.y;
        out["offset"] = d.offset;
        out["covariates"] = covariate ? Matrix(d.design.rightCols(1)) : Matrix(d.y.size(), 0);
        out["phi"] = d.phi;
        out["mu"] = d.mu;
        out["beta"] = d.beta;
        out["boundary"] = std::vector<bool>(d.boundary.begin(), d.boundary.end());
        out["group"] = gen.tmpl().group;
        return out;
      },
      py::arg("scenario") = "A", py::arg("seed") = 1, py::arg("covariate") = true);
}
