#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace adaptcar {

using Index = std::ptrdiff_t;

/// Unordered pair of area indices, stored with a < b.
struct Edge {
  Index a = 0;
  Index b = 0;

  Edge() = default;
  Edge(Index k, Index j) : a(k < j ? k : j), b(k < j ? j : k) {}

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// The fixed geography: n areas and the border-sharing pairs between them.
/// Immutable once built; edges are kept sorted so edge ids are stable.
class AdjacencyGraph {
 public:
  /// Throws ModelError on out-of-range indices, self-loops or duplicate pairs
  /// ((k, j) and (j, k) count as the same pair).
  AdjacencyGraph(Index n, const std::vector<Edge>& edges,
                 std::optional<std::vector<Point>> coords = std::nullopt);

  Index size() const { return n_; }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(std::size_t id) const { return edges_[id]; }

  /// Edge id of (k, j) or nullopt when the areas are not adjacent.
  std::optional<std::size_t> find_edge(Index k, Index j) const;

  /// Ids of the edges incident to area k.
  const std::vector<std::size_t>& incident(Index k) const { return incident_[k]; }
  Index degree(Index k) const { return static_cast<Index>(incident_[k].size()); }
  /// The other endpoint of edge `id` as seen from area k.
  Index other(std::size_t id, Index k) const {
    return edges_[id].a == k ? edges_[id].b : edges_[id].a;
  }

  bool has_coords() const { return coords_.has_value(); }
  const std::vector<Point>& coords() const;

 private:
  Index n_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> incident_;
  std::optional<std::vector<Point>> coords_;
};

using GraphPtr = std::shared_ptr<const AdjacencyGraph>;

/// Exact, hashable identity of a neighbour matrix: the packed activity bits.
struct StateKey {
  std::vector<std::uint64_t> bits;

  friend bool operator==(const StateKey&, const StateKey&) = default;

  /// 16 hex digit FNV-1a digest of the bits; stable across runs and platforms.
  std::string digest() const;
};

struct StateKeyHash {
  std::size_t operator()(const StateKey& key) const;
};

/// Binary symmetric W over the edges of an AdjacencyGraph. Non-edges are
/// always zero; flags live on unordered edges so symmetry holds by construction.
class NeighbourMatrix {
 public:
  NeighbourMatrix(GraphPtr graph, std::vector<std::uint8_t> active);

  const AdjacencyGraph& graph() const { return *graph_; }
  const GraphPtr& graph_ptr() const { return graph_; }
  Index size() const { return graph_->size(); }

  bool active(std::size_t edge_id) const { return active_[edge_id] != 0; }
  void set(std::size_t edge_id, bool on) { active_[edge_id] = on ? 1 : 0; }
  void toggle(std::size_t edge_id) { active_[edge_id] ^= 1; }

  /// w_kj; zero whenever (k, j) is not a graph edge.
  double weight(Index k, Index j) const;
  /// w_k+, the number of active edges incident to k.
  Index row_sum(Index k) const;
  std::vector<Index> row_sums() const;
  std::size_t active_count() const;

  /// Calls fn(j) for each active neighbour j of k.
  template <typename Fn>
  void for_each_neighbour(Index k, Fn&& fn) const {
    for (std::size_t id : graph_->incident(k))
      if (active_[id]) fn(graph_->other(id, k));
  }

  const std::vector<std::uint8_t>& flags() const { return active_; }

  /// Areas with no active neighbour.
  std::vector<Index> isolated_areas() const;

 private:
  GraphPtr graph_;
  std::vector<std::uint8_t> active_;
};

/// Inactive graph edges (w_kj = 0 between adjacent areas), sorted.
struct BoundarySet {
  std::vector<Edge> edges;
  std::vector<std::size_t> edge_ids;

  std::size_t size() const { return edges.size(); }
  bool empty() const { return edges.empty(); }
};

NeighbourMatrix full_matrix(GraphPtr graph);
BoundarySet boundaries(const NeighbourMatrix& w);
StateKey state_key(const NeighbourMatrix& w);
std::size_t edge_count(const AdjacencyGraph& graph);

/// rows x cols rook-adjacency lattice with unit-spaced centroids.
/// Area id = r * cols + c.
GraphPtr make_lattice(Index rows, Index cols, double spacing = 1.0);

}  // namespace adaptcar
