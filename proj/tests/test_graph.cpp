#include <set>

#include "adaptcar/errors.hpp"
#include "adaptcar/graph.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adaptcar;

namespace {

GraphPtr path3() {
  return std::make_shared<const AdjacencyGraph>(3, std::vector<Edge>{{0, 1}, {1, 2}});
}

GraphPtr complete(Index n) {
  std::vector<Edge> e;
  for (Index k = 0; k < n; ++k)
    for (Index j = k + 1; j < n; ++j) e.emplace_back(k, j);
  return std::make_shared<const AdjacencyGraph>(n, e);
}

}  // namespace

TEST_CASE("full_matrix activates every edge") {
  auto two = std::make_shared<const AdjacencyGraph>(2, std::vector<Edge>{{0, 1}});
  auto w2 = full_matrix(two);
  CHECK(w2.weight(0, 1) == 1.0);
  CHECK(w2.weight(1, 0) == 1.0);

  auto empty = std::make_shared<const AdjacencyGraph>(4, std::vector<Edge>{});
  CHECK(full_matrix(empty).active_count() == 0);

  auto w = full_matrix(path3());
  CHECK(w.active_count() == 2);
  CHECK(w.row_sum(0) == 1);
  CHECK(w.row_sum(1) == 2);
  CHECK(w.row_sum(2) == 1);
  CHECK(w.weight(0, 2) == 0.0);
}

TEST_CASE("boundaries are the inactive graph edges") {
  CHECK(boundaries(full_matrix(path3())).empty());

  auto one = std::make_shared<const AdjacencyGraph>(2, std::vector<Edge>{{1, 0}});
  NeighbourMatrix off(one, {0});
  auto b = boundaries(off);
  REQUIRE(b.size() == 1);
  CHECK(b.edges[0] == Edge(0, 1));

  auto w = full_matrix(path3());
  w.set(*w.graph().find_edge(1, 0), false);
  auto b3 = boundaries(w);
  REQUIRE(b3.size() == 1);
  CHECK(b3.edges[0] == Edge(0, 1));
}

TEST_CASE("state keys identify active sets") {
  auto w = full_matrix(path3());
  auto copy = w;
  CHECK(state_key(w) == state_key(copy));
  copy.toggle(0);
  CHECK_FALSE(state_key(w) == state_key(copy));
  copy.toggle(0);
  CHECK(state_key(w) == state_key(copy));
  CHECK(state_key(w).digest() == state_key(copy).digest());
}

TEST_CASE("state key digest is stable across runs") {
  auto w = full_matrix(make_lattice(3, 3));
  w.set(0, false);
  // FNV-1a over the little-endian words {12, 0xffe}, computed independently.
  CHECK(state_key(w).digest() == "ee76666ff948bdde");
}

TEST_CASE("edge_count") {
  CHECK(edge_count(*path3()) == 2);
  CHECK(edge_count(*complete(4)) == 6);
  CHECK(edge_count(*make_lattice(20, 20)) == 760);
}

TEST_CASE("graph validation rejects bad edges") {
  CHECK_THROWS_AS(AdjacencyGraph(3, {{0, 3}}), ModelError);
  CHECK_THROWS_AS(AdjacencyGraph(3, {{1, 1}}), ModelError);
  CHECK_THROWS_AS(AdjacencyGraph(3, {{0, 1}, {1, 0}}), ModelError);
  CHECK_THROWS_AS(AdjacencyGraph(2, {{0, 1}}, std::vector<Point>{{0, 0}}), ModelError);
}

TEST_CASE("properties on random graphs") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const Index n = 2 + rep % 15;
    auto g = testing::random_graph(n, 0.3, rng);
    CHECK(boundaries(full_matrix(g)).empty());

    auto w = testing::random_w(g, 0.6, rng);
    // Row sums equal brute-force active degree.
    auto sums = w.row_sums();
    for (Index k = 0; k < n; ++k) {
      Index brute = 0;
      for (Index j = 0; j < n; ++j)
        if (j != k) brute += static_cast<Index>(w.weight(k, j));
      CHECK(sums[k] == brute);
      CHECK(w.row_sum(k) == brute);
    }
    // Boundaries plus active edges partition the edge set.
    auto b = boundaries(w);
    CHECK(b.size() + w.active_count() == g->edge_count());
    for (std::size_t id : b.edge_ids) CHECK_FALSE(w.active(id));

    if (g->edge_count() > 0) {
      auto t = w;
      std::uniform_int_distribution<std::size_t> pick(0, g->edge_count() - 1);
      const auto id = pick(rng);
      t.toggle(id);
      CHECK_FALSE(state_key(t) == state_key(w));
      t.toggle(id);
      CHECK(state_key(t) == state_key(w));
    }
  }
}
