#include "adaptcar/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "adaptcar/errors.hpp"

namespace adaptcar {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Splits on commas when present, otherwise on runs of whitespace. Comments
// start at '#'.
std::vector<std::string> fields(const std::string& raw) {
  std::string line = raw.substr(0, raw.find('#'));
  std::vector<std::string> out;
  if (line.find(',') != std::string::npos) {
    std::size_t start = 0;
    for (;;) {
      const auto pos = line.find(',', start);
      out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (out.size() == 1 && out[0].empty()) out.clear();
    return out;
  }
  std::istringstream ss(line);
  for (std::string tok; ss >> tok;) out.push_back(tok);
  return out;
}

class LineReader {
 public:
  LineReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  // Next line with at least one field; false at end of input.
  bool next(std::vector<std::string>& out) {
    std::string raw;
    while (std::getline(in_, raw)) {
      ++line_;
      out = fields(raw);
      if (!out.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(name_, line_, what); }

  double number(const std::string& tok, const std::string& what) const {
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    const auto r = std::from_chars(tok.data(), end, v);
    if (tok.empty() || r.ec != std::errc() || r.ptr != end) fail("bad " + what + " '" + tok + "'");
    return v;
  }

  Index index(const std::string& tok, const std::string& what) const {
    long long v = 0;
    const auto* end = tok.data() + tok.size();
    const auto r = std::from_chars(tok.data(), end, v);
    if (tok.empty() || r.ec != std::errc() || r.ptr != end) fail("bad " + what + " '" + tok + "'");
    if (v < 0) fail(what + " must be non-negative, got " + tok);
    return static_cast<Index>(v);
  }

  std::size_t line() const { return line_; }
  const std::string& name() const { return name_; }

 private:
  std::istream& in_;
  std::string name_;
  std::size_t line_ = 0;
};

std::ifstream open(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  return in;
}

// Ids must cover 0..n-1 exactly once; returns the row order as ids.
void check_ids(const std::vector<Index>& ids, const std::string& name) {
  const Index n = static_cast<Index>(ids.size());
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (Index id : ids) {
    if (id >= n) throw ParseError(name + ": area_id " + std::to_string(id) + " out of range for " + std::to_string(n) + " rows");
    if (seen[id]) throw ParseError(name + ": area_id " + std::to_string(id) + " appears twice");
    seen[id] = 1;
  }
}

}  // namespace

std::vector<Edge> read_edge_list(std::istream& in, const std::string& name, std::optional<Index> n) {
  LineReader r(in, name);
  std::vector<Edge> edges;
  std::set<Edge> seen;
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f.size() != 2) r.fail("expected 'k j', found " + std::to_string(f.size()) + " fields");
    const Index k = r.index(f[0], "area index"), j = r.index(f[1], "area index");
    if (n && (k >= *n || j >= *n))
      r.fail("area index " + std::to_string(std::max(k, j)) + " out of range for " + std::to_string(*n) + " areas");
    if (k == j) r.fail("self-loop on area " + std::to_string(k));
    if (!seen.insert(Edge(k, j)).second)
      r.fail("duplicate pair (" + std::to_string(k) + ", " + std::to_string(j) + ")");
    edges.emplace_back(k, j);
  }
  return edges;
}

std::vector<Point> read_centroids(std::istream& in, const std::string& name, Index n) {
  LineReader r(in, name);
  std::vector<Point> pts(static_cast<std::size_t>(n));
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f.size() != 3) r.fail("expected 'k x y', found " + std::to_string(f.size()) + " fields");
    const Index k = r.index(f[0], "area index");
    if (k >= n) r.fail("area index " + std::to_string(k) + " out of range for " + std::to_string(n) + " areas");
    if (seen[k]) r.fail("second centroid for area " + std::to_string(k));
    seen[k] = 1;
    pts[k] = {r.number(f[1], "x"), r.number(f[2], "y")};
  }
  for (Index k = 0; k < n; ++k)
    if (!seen[k]) throw ParseError(name + ": no centroid for area " + std::to_string(k));
  return pts;
}

GraphPtr load_graph(const std::string& adjacency_path, std::optional<Index> n,
                    const std::string& centroid_path) {
  auto in = open(adjacency_path);
  const auto edges = read_edge_list(in, adjacency_path, n);
  Index count = n.value_or(0);
  if (!n)
    for (const Edge& e : edges) count = std::max(count, e.b + 1);
  std::optional<std::vector<Point>> coords;
  if (!centroid_path.empty()) {
    auto cin = open(centroid_path);
    coords = read_centroids(cin, centroid_path, count);
  }
  return std::make_shared<const AdjacencyGraph>(count, edges, std::move(coords));
}

ModelSpec DataTable::spec(Family family, RhoMode rho) const {
  ModelSpec s;
  s.family = family;
  s.y = y;
  s.offset = offset;
  s.trials = trials;
  s.design.resize(n(), 1 + covariates.cols());
  s.design.col(0).setOnes();
  if (covariates.cols() > 0) s.design.rightCols(covariates.cols()) = covariates;
  s.covariate_names = {"intercept"};
  for (const auto& c : covariate_names) s.covariate_names.push_back(c);
  s.rho_mode = rho;
  return s;
}

DataTable read_data(std::istream& in, const std::string& name, Family family) {
  LineReader r(in, name);
  DataTable t;
  if (!r.next(t.header)) throw ParseError(name + ": empty data file");
  std::vector<std::string> required = {"area_id", "y", "offset"};
  if (family == Family::Binomial) required.push_back("trials");
  if (t.header.size() < required.size()) r.fail("header needs columns " + [&] {
    std::string s;
    for (const auto& c : required) s += (s.empty() ? "" : ", ") + c;
    return s;
  }());
  for (std::size_t c = 0; c < required.size(); ++c)
    if (t.header[c] != required[c])
      r.fail("column " + std::to_string(c + 1) + " must be '" + required[c] + "', found '" + t.header[c] + "'");
  const std::size_t q = t.header.size() - required.size();
  t.covariate_names.assign(t.header.begin() + static_cast<std::ptrdiff_t>(required.size()), t.header.end());
  {
    std::set<std::string> names(t.header.begin(), t.header.end());
    if (names.size() != t.header.size()) r.fail("duplicate column name in header");
  }

  std::vector<Index> ids;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f.size() != t.header.size())
      r.fail("expected " + std::to_string(t.header.size()) + " fields, found " + std::to_string(f.size()));
    ids.push_back(r.index(f[0], "area_id"));
    std::vector<double> row;
    for (std::size_t c = 1; c < f.size(); ++c) row.push_back(r.number(f[c], "value in column '" + t.header[c] + "'"));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(name + ": no data rows");
  check_ids(ids, name);

  const Index n = static_cast<Index>(rows.size());
  t.y.resize(n);
  t.offset.resize(n);
  if (family == Family::Binomial) t.trials.resize(n);
  t.covariates.resize(n, static_cast<Index>(q));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index k = ids[i];
    const auto& row = rows[i];
    t.y[k] = row[0];
    t.offset[k] = row[1];
    std::size_t c = 2;
    if (family == Family::Binomial) t.trials[k] = row[c++];
    for (std::size_t j = 0; j < q; ++j) t.covariates(k, static_cast<Index>(j)) = row[c + j];
  }
  return t;
}

DataTable load_data(const std::string& path, Family family) {
  auto in = open(path);
  return read_data(in, path, family);
}

TemplateTable read_template_table(std::istream& in, const std::string& name) {
  LineReader r(in, name);
  std::vector<std::string> header;
  if (!r.next(header)) throw ParseError(name + ": empty template file");
  const std::vector<std::string> expected = {"area_id", "x", "y", "group"};
  if (header != expected) r.fail("header must be 'area_id, x, y, group'");
  std::vector<Index> ids;
  std::vector<Point> pts;
  std::vector<int> groups;
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f.size() != 4) r.fail("expected 4 fields, found " + std::to_string(f.size()));
    ids.push_back(r.index(f[0], "area_id"));
    pts.push_back({r.number(f[1], "x"), r.number(f[2], "y")});
    groups.push_back(static_cast<int>(r.index(f[3], "group")));
  }
  if (ids.empty()) throw ParseError(name + ": no template rows");
  check_ids(ids, name);
  TemplateTable t;
  t.coords.resize(ids.size());
  t.group.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    t.coords[ids[i]] = pts[i];
    t.group[ids[i]] = groups[i];
  }
  return t;
}

Template load_template(const std::string& template_path, const std::string& adjacency_path) {
  auto in = open(template_path);
  auto table = read_template_table(in, template_path);
  const Index n = static_cast<Index>(table.group.size());
  auto ein = open(adjacency_path);
  const auto edges = read_edge_list(ein, adjacency_path, n);
  Template t;
  t.graph = std::make_shared<const AdjacencyGraph>(n, edges, std::move(table.coords));
  t.group = std::move(table.group);
  t.validate();
  return t;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string digest_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string provenance_header(const Provenance& p) {
  std::string s = "# adaptcar " ADAPTCAR_VERSION "\n";
  if (!p.command.empty()) s += "# command: " + p.command + "\n";
  s += "# seed: " + std::to_string(p.seed) + "\n";
  s += "# config: " + p.config_digest + "\n";
  return s;
}

void write_edge_list(std::ostream& out, const std::vector<Edge>& edges) {
  for (const Edge& e : edges) out << e.a << ' ' << e.b << '\n';
}

void write_data(std::ostream& out, const ModelSpec& spec) {
  const bool binomial = spec.family == Family::Binomial;
  out << "area_id,y,offset";
  if (binomial) out << ",trials";
  for (Index j = 1; j < spec.p(); ++j)
    out << ',' << (static_cast<Index>(spec.covariate_names.size()) > j ? spec.covariate_names[j] : "x" + std::to_string(j));
  out << '\n';
  for (Index k = 0; k < spec.n(); ++k) {
    out << k << ',' << format_number(spec.y[k]) << ',' << format_number(spec.offset[k]);
    if (binomial) out << ',' << format_number(spec.trials[k]);
    for (Index j = 1; j < spec.p(); ++j) out << ',' << format_number(spec.design(k, j));
    out << '\n';
  }
}

void write_template(std::ostream& out, const Template& t) {
  out << "area_id,x,y,group\n";
  const auto& c = t.graph->coords();
  for (std::size_t k = 0; k < t.group.size(); ++k)
    out << k << ',' << format_number(c[k].x) << ',' << format_number(c[k].y) << ',' << t.group[k] << '\n';
}

void write_fit(std::ostream& out, const FitResult& fit) {
  auto kv = [&](const std::string& key, const std::string& value) { out << key << '\t' << value << '\n'; };
  auto summary = [&](const std::string& key, const Summary& s) {
    kv(key + ".median", format_number(s.median));
    kv(key + ".lower", format_number(s.lower));
    kv(key + ".upper", format_number(s.upper));
  };
  kv("backend", fit.backend);
  kv("family", to_string(fit.family));
  kv("areas", std::to_string(fit.n()));
  for (std::size_t j = 0; j < fit.beta.size(); ++j)
    summary("beta." + (j < fit.beta_names.size() ? fit.beta_names[j] : std::to_string(j)), fit.beta[j]);
  if (fit.rho) summary("rho", *fit.rho);
  if (fit.tau) summary("tau", *fit.tau);
  if (fit.sigma) summary("sigma", *fit.sigma);
  kv("mean_deviance", format_number(fit.mean_deviance));
  kv("p_d", format_number(fit.p_d));
  kv("dic", format_number(fit.dic));
  out << '\n';

  out << "area_id\tphi_median\tphi_lo\tphi_hi\tmu_median\trisk_median\n";
  const bool re = !fit.phi.empty();
  const bool risk = !fit.risk.empty();
  for (Index k = 0; k < fit.n(); ++k) {
    out << k << '\t';
    if (re)
      out << format_number(fit.phi[k].median) << '\t' << format_number(fit.phi[k].lower) << '\t'
          << format_number(fit.phi[k].upper);
    else
      out << "NA\tNA\tNA";
    out << '\t' << format_number(fit.fitted[k].median) << '\t'
        << (risk ? format_number(fit.risk[k].median) : std::string("NA")) << '\n';
  }
}

void write_boundary_table(std::ostream& out, const BoundaryReport& report) {
  out << "edge_a\tedge_b\trisk_difference\n";
  for (const auto& row : report.rows)
    out << row.edge.a << '\t' << row.edge.b << '\t' << format_number(row.difference) << '\n';
}

}  // namespace adaptcar
