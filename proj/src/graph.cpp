#include "adaptcar/graph.hpp"

#include <algorithm>
#include <cstdio>

#include "adaptcar/errors.hpp"

namespace adaptcar {

AdjacencyGraph::AdjacencyGraph(Index n, const std::vector<Edge>& edges,
                               std::optional<std::vector<Point>> coords)
    : n_(n), edges_(edges), incident_(n > 0 ? n : 0), coords_(std::move(coords)) {
  if (n < 0) throw ModelError("graph: negative area count");
  for (const Edge& e : edges_) {
    if (e.a < 0 || e.b >= n)
      throw ModelError("graph: edge (" + std::to_string(e.a) + ", " +
                       std::to_string(e.b) + ") out of range for n=" +
                       std::to_string(n));
    if (e.a == e.b)
      throw ModelError("graph: self-loop at area " + std::to_string(e.a));
  }
  std::sort(edges_.begin(), edges_.end());
  auto dup = std::adjacent_find(edges_.begin(), edges_.end());
  if (dup != edges_.end())
    throw ModelError("graph: duplicate edge (" + std::to_string(dup->a) + ", " +
                     std::to_string(dup->b) + ")");
  for (std::size_t id = 0; id < edges_.size(); ++id) {
    incident_[edges_[id].a].push_back(id);
    incident_[edges_[id].b].push_back(id);
  }
  if (coords_ && static_cast<Index>(coords_->size()) != n)
    throw ModelError("graph: " + std::to_string(coords_->size()) +
                     " centroids for " + std::to_string(n) + " areas");
}

std::optional<std::size_t> AdjacencyGraph::find_edge(Index k, Index j) const {
  if (k == j || k < 0 || j < 0 || k >= n_ || j >= n_) return std::nullopt;
  Edge e(k, j);
  auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
  if (it == edges_.end() || *it != e) return std::nullopt;
  return static_cast<std::size_t>(it - edges_.begin());
}

const std::vector<Point>& AdjacencyGraph::coords() const {
  if (!coords_) throw ModelError("graph: centroids were not supplied");
  return *coords_;
}

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

std::uint64_t fnv1a(const std::vector<std::uint64_t>& words) {
  std::uint64_t h = kFnvOffset;
  for (std::uint64_t w : words)
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (w >> (8 * byte)) & 0xffu;
      h *= kFnvPrime;
    }
  return h;
}

}  // namespace

std::string StateKey::digest() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(bits)));
  return buf;
}

std::size_t StateKeyHash::operator()(const StateKey& key) const {
  return static_cast<std::size_t>(fnv1a(key.bits));
}

NeighbourMatrix::NeighbourMatrix(GraphPtr graph, std::vector<std::uint8_t> active)
    : graph_(std::move(graph)), active_(std::move(active)) {
  if (!graph_) throw ModelError("neighbour matrix: null graph");
  if (active_.size() != graph_->edge_count())
    throw ModelError("neighbour matrix: flag count does not match edge count");
  for (auto& f : active_) f = f ? 1 : 0;
}

double NeighbourMatrix::weight(Index k, Index j) const {
  auto id = graph_->find_edge(k, j);
  return id && active_[*id] ? 1.0 : 0.0;
}

Index NeighbourMatrix::row_sum(Index k) const {
  Index s = 0;
  for (std::size_t id : graph_->incident(k)) s += active_[id];
  return s;
}

std::vector<Index> NeighbourMatrix::row_sums() const {
  std::vector<Index> sums(graph_->size(), 0);
  for (std::size_t id = 0; id < active_.size(); ++id)
    if (active_[id]) {
      ++sums[graph_->edge(id).a];
      ++sums[graph_->edge(id).b];
    }
  return sums;
}

std::size_t NeighbourMatrix::active_count() const {
  return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), 1));
}

std::vector<Index> NeighbourMatrix::isolated_areas() const {
  std::vector<Index> out;
  auto sums = row_sums();
  for (Index k = 0; k < size(); ++k)
    if (sums[k] == 0) out.push_back(k);
  return out;
}

NeighbourMatrix full_matrix(GraphPtr graph) {
  std::vector<std::uint8_t> flags(graph->edge_count(), 1);
  return NeighbourMatrix(std::move(graph), std::move(flags));
}

BoundarySet boundaries(const NeighbourMatrix& w) {
  BoundarySet out;
  const auto& g = w.graph();
  for (std::size_t id = 0; id < g.edge_count(); ++id)
    if (!w.active(id)) {
      out.edges.push_back(g.edge(id));
      out.edge_ids.push_back(id);
    }
  return out;
}

StateKey state_key(const NeighbourMatrix& w) {
  StateKey key;
  const auto& flags = w.flags();
  key.bits.assign((flags.size() + 63) / 64 + 1, 0);
  // Leading word records the edge count so keys from different graphs differ.
  key.bits[0] = flags.size();
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i]) key.bits[1 + i / 64] |= std::uint64_t{1} << (i % 64);
  return key;
}

std::size_t edge_count(const AdjacencyGraph& graph) { return graph.edge_count(); }

GraphPtr make_lattice(Index rows, Index cols, double spacing) {
  if (rows <= 0 || cols <= 0) throw ModelError("lattice: dimensions must be positive");
  std::vector<Edge> edges;
  std::vector<Point> coords(rows * cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      Index k = r * cols + c;
      coords[k] = {c * spacing, r * spacing};
      if (c + 1 < cols) edges.emplace_back(k, k + 1);
      if (r + 1 < rows) edges.emplace_back(k, k + cols);
    }
  return std::make_shared<const AdjacencyGraph>(rows * cols, edges, std::move(coords));
}

}  // namespace adaptcar
