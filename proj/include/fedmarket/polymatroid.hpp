#pragma once
/**
 * @file polymatroid.hpp
 * @brief Leaf-set families, rank functions, laminarity and integrator
 *        encapsulation over service dependency DAGs.
 *
 * A ServiceDag carries one capacity per node. Internal nodes constrain the
 * total rate their reachable leaves may draw; leaves constrain themselves.
 * When the family of reachable-leaf sets is laminar the induced rank function
 * is computed by a forest walk; otherwise by exhaustive cover search.
 */

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedmarket/dag.hpp"

namespace fedmarket {

/* ==================================================================== */
/* Service DAGs                                                          */
/* ==================================================================== */

struct ServiceDag {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<double> capacity;  // size n, all > 0
  std::vector<std::string> label;  // optional, size n or empty
};

// Validates shape (capacities positive, endpoints in range, acyclic).
ServiceDag make_service_dag(int n, std::vector<std::pair<int, int>> edges,
                            std::vector<double> capacity,
                            std::vector<std::string> label = {});

// Out-degree-zero nodes, ascending.
std::vector<int> dag_leaves(const ServiceDag& g);

// Pipeline templates reused as service graphs for structural checks.
// Capacity defaults to the per-stage demand.
ServiceDag service_dag_from_template(const PipelineTemplate& t);

/* ==================================================================== */
/* Leaf-set families and laminarity                                      */
/* ==================================================================== */

struct LeafSetFamily {
  std::vector<int> leaves;  // ascending
  struct Entry {
    int node;                   // internal node id
    std::vector<int> leaf_set;  // ascending, non-empty
  };
  std::vector<Entry> sets;  // one per internal node, ascending by node id
};

LeafSetFamily leaf_sets(const ServiceDag& g);

// First crossing pair found (two sets that overlap without nesting).
struct LaminarWitness {
  int node_a = -1, node_b = -1;
  std::vector<int> set_a, set_b;
};

std::optional<LaminarWitness> laminar_crossing(const LeafSetFamily& fam);
inline bool is_laminar(const LeafSetFamily& fam) {
  return !laminar_crossing(fam).has_value();
}

/* ==================================================================== */
/* Rank and feasibility                                                  */
/* ==================================================================== */

// f(S) = cheapest total capacity of an antichain of constraint nodes whose
// leaf sets cover S; leaves participate as their own singleton constraints.
// Laminar families use the containment-forest walk, everything else an
// exhaustive cover search (requires <= 64 leaves). f(empty) = 0.
double rank(const ServiceDag& g, const std::vector<int>& S);

// Literal minimisation over all covering antichains, independent of the
// production path. Intended for cross-checks; exponential.
double rank_bruteforce_antichains(const ServiceDag& g, const std::vector<int>& S);

struct GovernanceBounds {
  std::map<int, double> upper;  // leaf -> max exposed rate
};

// x maps leaf -> requested rate. Feasible iff all rates are >= 0, every
// internal constraint holds, every leaf respects its own capacity and any
// governance bound.
bool is_feasible(const ServiceDag& g, const std::map<int, double>& x,
                 const GovernanceBounds* bounds = nullptr);

/* ==================================================================== */
/* Submodularity audit                                                   */
/* ==================================================================== */

struct SubmodularReport {
  bool submodular = true;
  long long pairs_checked = 0;
  long long violations = 0;   // ordered pairs (S,T) with f(S)+f(T) < f(S|T)+f(S&T)
  double max_violation = 0.0; // largest shortfall observed
  bool exhaustive = false;
};

// Exhaustive over all ordered subset pairs when the DAG has <= 12 leaves,
// otherwise `sample_budget` random pairs drawn from the given seed.
SubmodularReport check_submodular(const ServiceDag& g, int sample_budget = 4096,
                                  uint64_t seed = 1);

/* ==================================================================== */
/* Max flow                                                              */
/* ==================================================================== */

struct FlowEdge {
  int from = 0, to = 0;
  double capacity = 0.0;
};

// Edmonds-Karp (shortest augmenting path). Exact on integral capacities.
double max_flow(int n_nodes, const std::vector<FlowEdge>& edges, int source, int sink);

/* ==================================================================== */
/* Integrator encapsulation                                              */
/* ==================================================================== */

struct EncapsulatedDag {
  ServiceDag quotient;               // one node per class, composite capacities
  std::vector<std::string> class_names;
  std::vector<int> node_class;       // original node -> quotient node
};

// Contract each partition class to one composite node. Classes must each
// induce a weakly connected sub-DAG and the quotient must stay acyclic
// (StructuralError otherwise). Composite capacity = max flow between the
// class's boundary entries and exits with node capacities enforced by
// splitting and infinite-capacity arcs elsewhere.
EncapsulatedDag encapsulate(const ServiceDag& g, const std::vector<int>& node_class,
                            std::vector<std::string> class_names = {});

// Template stages partitioned by home domain, classes ordered by first use.
std::pair<std::vector<int>, std::vector<std::string>> partition_by_home_domain(
    const PipelineTemplate& t);

/* ==================================================================== */
/* Structure report                                                      */
/* ==================================================================== */

// One row of the harness's structure-check output.
struct StructureReport {
  DagClass cls = DagClass::general;
  bool laminar = false;
  std::optional<LaminarWitness> witness;
  bool submodular = false;
  long long gamma_violations = 0;
  double gamma_max = 0.0;
};

StructureReport structure_report(const ServiceDag& g, int sample_budget = 4096,
                                 uint64_t seed = 1);

}  // namespace fedmarket
