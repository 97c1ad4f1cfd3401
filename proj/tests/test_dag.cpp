/**
 * @file test_dag.cpp
 * @brief Pipeline templates, topological ordering and structure
 *        classification (tree / series-parallel / general).
 */

#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "fedmarket/dag.hpp"
#include "fedmarket/errors.hpp"

using namespace fedmarket;

namespace {

std::vector<std::pair<int, int>> sorted_pairs(std::vector<std::pair<int, int>> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

/* ==================================================================== */
/* Built-in templates                                                    */
/* ==================================================================== */

TEST_CASE("builtin templates validate and expose expected shapes") {
  for (const auto& kind : builtin_template_kinds()) {
    PipelineTemplate t = build_template(kind);
    CHECK(t.kind == kind);
    CHECK(t.stages.size() == 8);
    CHECK(t.value_budget == doctest::Approx(800.0));
    // Exactly one best-effort reporting stage, pinned to its home domain.
    int local_only = 0, best_effort = 0;
    for (const auto& s : t.stages) {
      if (s.sovereignty == Sovereignty::local_only) ++local_only;
      if (s.slice == Slice::best_effort) ++best_effort;
      CHECK(s.demand == doctest::Approx(1.0));
    }
    CHECK(local_only == 1);
    CHECK(best_effort == 1);
  }
}

TEST_CASE("unknown template kind is a config error") {
  CHECK_THROWS_AS(build_template("noisy-neighbour"), ConfigError);
}

TEST_CASE("template validation rejects malformed inputs") {
  PipelineTemplate t = build_template("cqi-chain");

  SUBCASE("duplicate stage id") {
    t.stages.push_back(t.stages.front());
    CHECK_THROWS_AS(validate_template(t), ConfigError);
  }
  SUBCASE("dangling edge") {
    t.edges.push_back({0, 99, std::nullopt});
    CHECK_THROWS_AS(validate_template(t), ConfigError);
  }
  SUBCASE("self loop") {
    t.edges.push_back({3, 3, std::nullopt});
    CHECK_THROWS_AS(validate_template(t), ConfigError);
  }
  SUBCASE("non-positive demand") {
    t.stages[2].demand = 0.0;
    CHECK_THROWS_AS(validate_template(t), ConfigError);
  }
  SUBCASE("cycle") {
    t.edges.push_back({7, 0, std::nullopt});
    CHECK_THROWS_AS(validate_template(t), ConfigError);
  }
}

TEST_CASE("slice names round-trip") {
  CHECK(slice_from_string("urllc") == Slice::urllc);
  CHECK(slice_from_string("embb") == Slice::embb);
  CHECK(slice_from_string("best-effort") == Slice::best_effort);
  CHECK(std::string(to_string(Slice::best_effort)) == "best-effort");
  CHECK_THROWS_AS(slice_from_string("gold"), ConfigError);
}

TEST_CASE("slice compatibility is one-directional") {
  // A worker may serve its own tier or any softer tier, never a stricter one.
  CHECK(slice_compatible(Slice::urllc, Slice::embb));
  CHECK(slice_compatible(Slice::urllc, Slice::urllc));
  CHECK(slice_compatible(Slice::embb, Slice::best_effort));
  CHECK_FALSE(slice_compatible(Slice::embb, Slice::urllc));
  CHECK_FALSE(slice_compatible(Slice::best_effort, Slice::embb));
}

/* ==================================================================== */
/* Topological order                                                     */
/* ==================================================================== */

TEST_CASE("topological order breaks ties by ascending id") {
  // Diamond 0->{1,2}->3: both middles become ready together.
  std::vector<std::pair<int, int>> edges{{0, 1}, {0, 2}, {1, 3}, {2, 3}};
  std::vector<int> order = topo_order_edges(4, edges);
  CHECK(order == std::vector<int>{0, 1, 2, 3});

  // Reversed insertion order must not change the result.
  std::vector<std::pair<int, int>> shuffled{{2, 3}, {1, 3}, {0, 2}, {0, 1}};
  CHECK(topo_order_edges(4, shuffled) == order);
}

TEST_CASE("topological order respects every edge") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + static_cast<int>(rng() % 10);
    // Random DAG on the identity order, then verify positions.
    std::vector<std::pair<int, int>> edges;
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v)
        if (rng() % 3 == 0) edges.emplace_back(u, v);
    std::vector<int> order = topo_order_edges(n, edges);
    std::vector<int> pos(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) pos[static_cast<size_t>(order[static_cast<size_t>(i)])] = i;
    for (auto [u, v] : edges) CHECK(pos[static_cast<size_t>(u)] < pos[static_cast<size_t>(v)]);
  }
}

TEST_CASE("cyclic graphs cannot be ordered") {
  std::vector<std::pair<int, int>> edges{{0, 1}, {1, 0}};
  CHECK_THROWS_AS(topo_order_edges(2, edges), StructuralError);
}

TEST_CASE("template topological order maps back to stage ids") {
  PipelineTemplate t = build_template("anomaly-sp");
  std::vector<int> order = topo_order(t);
  CHECK(order.size() == t.stages.size());
  CHECK(order == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

/* ==================================================================== */
/* Structure classification                                              */
/* ==================================================================== */

TEST_CASE("linear chain classifies as tree") {
  StructureClass sc = classify_structure(build_template("cqi-chain"));
  CHECK(sc.cls == DagClass::tree);
  REQUIRE(sc.parse_tree.has_value());
  // All real edges survive as parse-tree leaves.
  auto leaves = sorted_pairs(sc.parse_tree->leaf_edges());
  std::vector<std::pair<int, int>> want;
  for (int i = 0; i + 1 < 8; ++i) want.emplace_back(i, i + 1);
  CHECK(leaves == want);
}

TEST_CASE("probe fan-in classifies as series-parallel") {
  PipelineTemplate t = build_template("anomaly-sp");
  StructureClass sc = classify_structure(t);
  CHECK(sc.cls == DagClass::series_parallel);
  REQUIRE(sc.parse_tree.has_value());
  std::vector<std::pair<int, int>> want;
  for (const auto& e : t.edges) want.emplace_back(e.from, e.to);
  CHECK(sorted_pairs(sc.parse_tree->leaf_edges()) == sorted_pairs(want));
}

TEST_CASE("entangled suite classifies as general") {
  StructureClass sc = classify_structure(build_template("ran-entangled"));
  CHECK(sc.cls == DagClass::general);
  CHECK_FALSE(sc.parse_tree.has_value());
}

TEST_CASE("two-terminal diamond classifies as series-parallel") {
  std::vector<std::pair<int, int>> edges{{0, 1}, {0, 2}, {1, 3}, {2, 3}};
  StructureClass sc = classify_structure(4, edges);
  CHECK(sc.cls == DagClass::series_parallel);
  REQUIRE(sc.parse_tree.has_value());
  CHECK(sc.parse_tree->leaf_edges().size() == 4);
}

TEST_CASE("crossed diamond resists series-parallel reduction") {
  // The classic non-reducible pattern: diamond plus a chord.
  std::vector<std::pair<int, int>> edges{{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 3}};
  CHECK(classify_structure(4, edges).cls == DagClass::general);
}

TEST_CASE("edgeless graph degenerates to a tree") {
  StructureClass sc = classify_structure(3, {});
  CHECK(sc.cls == DagClass::tree);
}

TEST_CASE("random arborescences always classify as tree") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    int n = 2 + static_cast<int>(rng() % 12);
    std::vector<std::pair<int, int>> edges;
    for (int v = 1; v < n; ++v)
      edges.emplace_back(static_cast<int>(rng() % static_cast<uint64_t>(v)), v);
    CHECK(classify_structure(n, edges).cls == DagClass::tree);
  }
}

namespace {

// Random two-terminal series-parallel graph with at least one genuine
// parallel join of multi-edge branches (forces in-degree 2 somewhere).
struct SpBuilder {
  std::vector<std::pair<int, int>> edges;
  int next = 0;

  int fresh() { return next++; }

  // Expands to a path or a parallel pair between s and t.
  void grow(int s, int t, int depth, std::mt19937_64& rng) {
    if (depth <= 0 || rng() % 3 == 0) {
      edges.emplace_back(s, t);
      return;
    }
    if (rng() % 2 == 0) {
      int m = fresh();
      grow(s, m, depth - 1, rng);
      grow(m, t, depth - 1, rng);
    } else {
      int m1 = fresh(), m2 = fresh();
      grow(s, m1, depth - 1, rng);
      grow(m1, t, depth - 1, rng);
      grow(s, m2, depth - 1, rng);
      grow(m2, t, depth - 1, rng);
    }
  }
};

}  // namespace

TEST_CASE("random series-parallel compositions never classify as general") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 60; ++trial) {
    SpBuilder b;
    int s = b.fresh(), t = b.fresh();
    // Guaranteed parallel join of two 2-edge branches, then random growth.
    int m1 = b.fresh(), m2 = b.fresh();
    b.edges.emplace_back(s, m1);
    b.grow(m1, t, 2, rng);
    b.edges.emplace_back(s, m2);
    b.grow(m2, t, 2, rng);
    StructureClass sc = classify_structure(b.next, b.edges);
    CHECK(sc.cls == DagClass::series_parallel);
    REQUIRE(sc.parse_tree.has_value());
    CHECK(sc.parse_tree->leaf_edges().size() == b.edges.size());
  }
}
