#pragma once
/**
 * @file strategies.hpp
 * @brief Comparator placement strategies over a topology snapshot: the
 *        cost-function oracle (tree DP + greedy), unconditional global
 *        round-robin, and the locality / latency-greedy / spillover
 *        heuristics, plus the merged-snapshot sharded oracle.
 *
 * Strategies are pure functions of their inputs; the round-robin cursor is
 * the single piece of caller-owned mutable state.
 */

#include <map>
#include <string>
#include <vector>

#include "fedmarket/dag.hpp"
#include "fedmarket/market.hpp"

namespace fedmarket {

/* ==================================================================== */
/* Snapshot and cost                                                     */
/* ==================================================================== */

struct CostWeights {
  double alpha = 1.0;  // inter-stage latency
  double beta = 1.0;   // per-stage utilisation
  double zeta = 1.0;   // domain crossings
};

// Full- or merged-visibility view of the worker population. Expected link
// latencies are jitter-free: same worker 0, same site lan_ms, else wan_ms.
struct TopologySnapshot {
  std::vector<WorkerView> workers;
  double lan_ms = 0.5;
  double wan_ms = 50.0;

  const WorkerView* find(int worker_id) const;
  double expected_link_ms(int worker_a, int worker_b) const;
};

struct PlacementDecision {
  bool accepted = false;
  std::string reject_reason;        // empty when accepted
  std::map<int, int> assignment;    // stage id -> worker id
  double total_cost = 0.0;          // cost-function value of the assignment
  int domains_crossed = 0;
};

// alpha * sum of expected edge latencies + beta * sum of demand/capacity +
// zeta * count of distinct domains. Requires every stage assigned to a
// worker present in the snapshot.
double placement_cost(const std::map<int, int>& assignment,
                      const PipelineTemplate& t, const TopologySnapshot& snap,
                      const CostWeights& w);

/* ==================================================================== */
/* Oracle                                                                */
/* ==================================================================== */

// Cost-function minimiser with full visibility. Evaluates every non-empty
// domain subset (the crossing term is constant inside a subset); within a
// subset, arborescent pipelines get an exact bottom-up DP over
// (stage, worker) and general DAGs a greedy topological assignment of
// incremental cost. Capacity is accounted greedily in topological order; a
// repair pass reassigns stages that would overbook. Ties break by
// (cost, loaded units, worker id). Residency-pinned stages only ever land
// in the origin domain. Rejects when some stage has no feasible worker.
PlacementDecision oracle_place(const PipelineTemplate& t,
                               const std::string& origin_domain,
                               const TopologySnapshot& snap,
                               const CostWeights& w);

// Merge pulled per-domain snapshots (coordinator's own view plus each peer
// that answered this epoch) and run the oracle on the union. Peers that
// timed out are simply absent from `pulled`.
PlacementDecision sharded_oracle_place(const PipelineTemplate& t,
                                       const std::string& origin_domain,
                                       const std::vector<TopologySnapshot>& pulled,
                                       const CostWeights& w);

/* ==================================================================== */
/* Baselines                                                             */
/* ==================================================================== */

// Unconditional global round-robin: stages take the next live,
// slice-feasible (and residency-feasible) worker in cyclic id order.
// No cost model, no load check — dispatch proceeds even to saturated
// workers. The cursor persists across pipelines and is caller-owned.
PlacementDecision rr_place(const PipelineTemplate& t,
                           const std::string& origin_domain,
                           const TopologySnapshot& snap, int& rr_cursor);

// Cheapest slice-feasible worker in the origin domain only, with
// intra-pipeline reservation stacking; rejects when the domain cannot hold
// a stage. No remote trading, no budget admission.
PlacementDecision locality_place(const PipelineTemplate& t,
                                 const std::string& origin_domain,
                                 const TopologySnapshot& snap,
                                 const MarketConfig& cfg);

// Per stage, minimise the incremental inter-stage latency to the already
// placed predecessors (the pipeline's first stages measure from the origin
// domain), ignoring load entirely. Ties prefer the lowest worker id.
PlacementDecision latency_greedy_place(const PipelineTemplate& t,
                                       const std::string& origin_domain,
                                       const TopologySnapshot& snap);

// Origin-domain workers (least loaded first) until reservations exhaust
// the domain, then the nearest peer domain by expected link latency,
// domain-name tie-break. Rejects when every domain is exhausted.
PlacementDecision spillover_place(const PipelineTemplate& t,
                                  const std::string& origin_domain,
                                  const TopologySnapshot& snap);

}  // namespace fedmarket
