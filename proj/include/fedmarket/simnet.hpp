#pragma once
/**
 * @file simnet.hpp
 * @brief Deterministic discrete-event engine: four-domain topology, latency
 *        and Poisson workload models, worker queueing, failure injection and
 *        end-to-end pipeline execution producing per-pipeline outcome rows.
 *
 * One logical event loop per run, strict (time, sequence) ordering. Workers
 * serve one load unit at a time from a FIFO queue; a stage occupies its
 * worker for base_service_ms x speed plus the slice processing delay, and
 * stage outputs travel to successor workers over sampled links. Identical
 * (config, seed) pairs reproduce identical records bit for bit.
 */

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fedmarket/dag.hpp"
#include "fedmarket/federation.hpp"
#include "fedmarket/market.hpp"
#include "fedmarket/strategies.hpp"

namespace fedmarket {

/* ==================================================================== */
/* Topology                                                              */
/* ==================================================================== */

struct DomainSpec {
  std::string domain_id;
  Site site = Site::edge;
  std::string role;  // descriptive label, not interpreted
  std::vector<WorkerSpec> workers;
};

// The stock four-domain fabric: d1 (DU, edge, 12 urllc workers), d2
// (CU+nearRT-RIC, edge, 6 urllc + 6 embb), d3 (nonRT-RIC, cloud, 12 embb),
// d4 (SMO, cloud, 12 best-effort). Worker ids 0..47, capacity 4, speed 1.
std::vector<DomainSpec> default_topology();

/* ==================================================================== */
/* Latency and workload models                                           */
/* ==================================================================== */

struct LatencyModel {
  double lan_ms = 0.5;        // between distinct workers on the same site
  double wan_ms = 50.0;       // cross-site mean
  double wan_jitter_ms = 5.0; // cross-site spread: uniform(wan +- jitter)

  // Extra processing time a stage of this slice adds to its service.
  double slice_delay_ms(Slice s) const;
};

struct WorkloadConfig {
  double lambda_pps = 5.0;   // aggregate arrival rate, split evenly per domain
  double duration_s = 840.0; // total simulated time
  double warmup_s = 240.0;   // measurement window is [warmup_s, duration_s)
  std::string pipeline_kind = "cqi-chain";
  std::uint64_t seed = 1;
};

// Exponential inter-arrival times; deterministic for a given rng state.
std::vector<double> poisson_arrivals(double lambda_pps, double duration_s,
                                     std::mt19937_64& rng);

// Same worker: 0. Same site: lan_ms. Cross-site: uniform wan_ms +- jitter.
double sample_link_latency(const WorkerSpec& src, const WorkerSpec& dst,
                           const LatencyModel& m, std::mt19937_64& rng);

/* ==================================================================== */
/* Failure injection                                                     */
/* ==================================================================== */

enum class FailureKind : uint8_t {
  worker_kill,          // target: worker id ("7") or a whole domain ("d1")
  broker_kill,          // target: domain id; workers orphaned, arrivals move
  partition_start,      // edge <-> cloud messages drop until partition_end
  partition_end,
  heterogeneity_profile // edge workers 2x slower, cloud workers 1.5x faster
};
const char* to_string(FailureKind k);
FailureKind failure_kind_from_name(const std::string& name);

struct FailureEvent {
  double time_s = 0.0;
  FailureKind kind = FailureKind::worker_kill;
  std::string target;
};

struct FailurePlan {
  std::vector<FailureEvent> events;
};

/* ==================================================================== */
/* Run configuration and record                                          */
/* ==================================================================== */

struct SimConfig {
  // market | oracle | oracle-sharded | rr-global | locality |
  // latency-greedy | spillover
  std::string strategy = "market";
  WorkloadConfig workload;
  LatencyModel latency;
  MarketConfig market;
  FederationConfig federation;
  CostWeights weights;
  GovernanceScenario governance = GovernanceScenario::D;
  std::vector<std::string> local_only_types;
  FailurePlan failures;
  std::vector<DomainSpec> topology;          // empty -> default_topology()
  std::optional<PipelineTemplate> custom_template; // overrides pipeline_kind
  double base_service_ms = 220.0;
  double broker_decision_ms = 0.0; // placement latency knob, default instant
  int max_stage_attempts = 2;      // placements per stage before giving up
};

struct PipelineRow {
  long pipeline_id = 0;
  double arrival_s = 0.0;
  std::string origin_domain;
  bool accepted = false;
  bool completed = false;
  double e2e_ms = 0.0; // meaningful iff completed
  int domains_crossed = 0;
  double placement_cost = 0.0;
  std::string reject_reason; // empty iff accepted and not failed
};

struct RunRecord {
  // Run metadata, echoed into every emitted row group.
  std::string strategy;
  std::string pipeline_kind;
  double lambda_pps = 0.0;
  std::uint64_t seed = 0;
  GovernanceScenario governance = GovernanceScenario::D;
  double warmup_s = 0.0;
  double duration_s = 0.0;

  // One row per pipeline arriving inside the measurement window, in
  // arrival order.
  std::vector<PipelineRow> rows;

  // Window accounting; accepted = completed + failed + in_flight.
  long arrived = 0;
  long accepted = 0;
  long completed = 0;
  long failed = 0;
  long in_flight = 0;

  // Stages whose results were delivered across the site cut while a
  // partition was active. Stays zero when message dropping is honoured.
  long cross_site_completions_in_partition = 0;
};

// Execute one scenario end to end. Validates the configuration up front
// (unknown strategy or pipeline kind, malformed failure targets, warmup
// past end of run all raise ConfigError before any event runs).
RunRecord run_sim(const SimConfig& cfg);

}  // namespace fedmarket
