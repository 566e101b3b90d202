#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "adaptcar/adaptive.hpp"
#include "adaptcar/graph.hpp"
#include "adaptcar/model.hpp"
#include "adaptcar/simulate.hpp"

namespace adaptcar {

// Readers throw ParseError("<name>:<line>: ...") for malformed input and
// ModelError for content that parses but is inconsistent (e.g. a self-loop).

/// "k j" per line, 0-based; '#' starts a comment; blank lines are skipped.
/// With `n` unset the area count is the largest index plus one.
std::vector<Edge> read_edge_list(std::istream& in, const std::string& name,
                                 std::optional<Index> n = std::nullopt);

/// "k x y" per line, every area exactly once.
std::vector<Point> read_centroids(std::istream& in, const std::string& name, Index n);

/// Area count from the edge list (or `n`), centroids optional.
GraphPtr load_graph(const std::string& adjacency_path, std::optional<Index> n = std::nullopt,
                    const std::string& centroid_path = "");

struct DataTable {
  std::vector<std::string> header;
  Vector y;
  Vector offset;
  Vector trials;  // binomial only
  Matrix covariates;  // n x q, without the intercept
  std::vector<std::string> covariate_names;

  Index n() const { return static_cast<Index>(y.size()); }
  /// Spec with an intercept column followed by the covariates.
  ModelSpec spec(Family family, RhoMode rho) const;
};

/// Delimited (comma, tab or spaces) with a header row: area_id, y, offset,
/// trials for the binomial family, then covariates. Rows may come in any
/// order; ids must cover 0..n-1 exactly once.
DataTable read_data(std::istream& in, const std::string& name, Family family);
DataTable load_data(const std::string& path, Family family);

/// Columns area_id, x, y, group; ids 0..n-1 exactly once.
struct TemplateTable {
  std::vector<Point> coords;
  std::vector<int> group;
};
TemplateTable read_template_table(std::istream& in, const std::string& name);
/// Template file plus its edge list.
Template load_template(const std::string& template_path, const std::string& adjacency_path);

// Writers. Every artifact starts with `# ` provenance lines supplied by the caller.
struct Provenance {
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string command;
};
std::string provenance_header(const Provenance& p);

/// Shortest round-trip text for finite values; "nan", "inf", "-inf" otherwise.
std::string format_number(double v);

void write_edge_list(std::ostream& out, const std::vector<Edge>& edges);
void write_data(std::ostream& out, const ModelSpec& spec);
void write_template(std::ostream& out, const Template& t);
/// Key-value block then the per-area table
/// area_id, phi_median, phi_lo, phi_hi, mu_median, risk_median.
void write_fit(std::ostream& out, const FitResult& fit);
/// edge_a, edge_b, risk_difference, sorted as in the report.
void write_boundary_table(std::ostream& out, const BoundaryReport& report);

/// 16 hex digit FNV-1a digest of `text`.
std::string digest_hex(const std::string& text);

}  // namespace adaptcar
