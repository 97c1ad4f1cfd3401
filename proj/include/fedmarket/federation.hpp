#pragma once
/**
 * @file federation.hpp
 * @brief Per-domain broker control loop: peer health with miss-count
 *        eviction, bounded-staleness price knowledge, recovery probing,
 *        summary-based publication routing, and governance policies.
 */

#include <array>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedmarket/market.hpp"

namespace fedmarket {

/* ==================================================================== */
/* Configuration                                                         */
/* ==================================================================== */

struct FederationConfig {
  double delta_prop_s = 10.0;   // price/summary exchange period
  double delta_health_s = 5.0;  // health probe / bookkeeping period
  double tau_fed_s = 5.0;       // per-RPC dispatch timeout
  int k_miss = 3;               // consecutive failed pushes before eviction
  double wan_max_ms = 50.0;     // worst-case one-way WAN latency
  int recovery_probe_every = 5; // unhealthy peers probed every n-th round

  // Maximum age of peer knowledge a routing decision may consume.
  double staleness_bound_s() const { return delta_prop_s + wan_max_ms / 1000.0; }
  // Ring capacity that always spans at least the staleness bound.
  int history_capacity() const;
};

/* ==================================================================== */
/* Messages and peer knowledge                                           */
/* ==================================================================== */

struct PriceSignalMsg {
  std::string origin_domain;
  double issued_at_s = 0.0;
  std::map<std::string, double> price;  // stage type -> clearing price
};

inline constexpr int k_centroid_dims = 8;

struct SummaryCluster {
  std::array<double, k_centroid_dims> centroid{};
  double radius = 0.0;
  double capacity = 0.0;  // spare load units advertised for the cluster
};

struct SubscriptionSummary {
  std::string origin_domain;
  std::vector<SummaryCluster> clusters;
};

// Everything one broker knows about one peer.
struct PeerView {
  std::string peer_domain;
  std::optional<PriceSignalMsg> last_price;
  std::optional<SubscriptionSummary> last_summary;
  int consecutive_misses = 0;
  bool healthy = true;
  // Newest-last (time, signal) pairs, trimmed to history_capacity().
  std::deque<std::pair<double, PriceSignalMsg>> price_history;
};

// Push outcome bookkeeping: success heals, k_miss-th consecutive failure
// marks the peer unhealthy and evicts its knowledge from routing.
void on_price_push_result(PeerView& pv, bool success, const FederationConfig& cfg);

// Store a received signal (ring-buffered) and refresh last_price.
void record_price_signal(PeerView& pv, double now_s, const PriceSignalMsg& msg,
                         const FederationConfig& cfg);

// Successful recovery probe: mark healthy and merge the peer's recent
// history by timestamp (union, duplicates dropped, capacity re-trimmed).
void reinstate_peer(PeerView& pv, double now_s,
                    const std::vector<std::pair<double, PriceSignalMsg>>& peer_history,
                    const FederationConfig& cfg);

// The peer's price signal if it is usable now: peer healthy and the signal
// no older than the staleness bound.
std::optional<PriceSignalMsg> fresh_price(const PeerView& pv, double now_s,
                                          const FederationConfig& cfg);

/* ==================================================================== */
/* Governance                                                            */
/* ==================================================================== */

enum class GovernanceScenario : uint8_t { A, B, C, D };
const char* to_string(GovernanceScenario s);
GovernanceScenario governance_scenario_from_name(const std::string& name);

struct GovernancePolicy {
  GovernanceScenario scenario = GovernanceScenario::D;
  std::set<std::string> local_only_types;      // types forced local when enforcing
  std::map<std::string, double> trust;         // peer domain -> [0,1]
  double trust_of(const std::string& peer) const;  // absent -> 1.0

  // Whether a broker at `site` enforces sovereignty under this scenario:
  // A nobody, B edge sites, C cloud sites, D everybody.
  bool enforces(Site site) const;
};

// The template a broker actually plans with: sovereignty tags are honoured
// (and extended to the policy's local-only types) only when the origin
// broker's site enforces; otherwise every stage is free.
PipelineTemplate apply_governance(const PipelineTemplate& t,
                                  const GovernancePolicy& policy, Site origin_site);

/* ==================================================================== */
/* Publication routing                                                   */
/* ==================================================================== */

// Deterministic synthetic content embedding for a stage type. The matching
// layer is exercised structurally: equal types embed identically, different
// types land far apart with overwhelming probability.
std::array<double, k_centroid_dims> type_centroid(const std::string& stage_type);

struct RouteCandidate {
  std::string peer_domain;
  double distance = 0.0;
};

// Healthy peers whose advertised clusters match the content vector within
// the distance threshold, have spare capacity, and clear the trust bar;
// ranked by ascending distance, then domain name.
std::vector<RouteCandidate> route_publication(
    const std::map<std::string, PeerView>& peers,
    const std::array<double, k_centroid_dims>& content, double distance_threshold,
    double required_trust, const GovernancePolicy& policy);

/* ==================================================================== */
/* Broker state machine                                                  */
/* ==================================================================== */

struct BrokerState {
  std::string domain;
  Site site = Site::edge;
  std::vector<WorkerView> workers;  // broker's belief about its own workers
  std::map<std::string, PeerView> peers;
  std::map<std::string, double> clearing;  // own latest clearing table
  std::set<std::string> known_types;       // type universe for price signals
  GovernancePolicy governance;
  int rr_cursor = 0;
  long epoch_counter = 0;
  double next_push_due_s = 0.0;

  WorkerView* find_worker(int worker_id);
};

struct EpochArrival {
  int pipeline_id = 0;
  const PipelineTemplate* t = nullptr;
};

struct PipelinePlan {
  int pipeline_id = 0;
  PlacementResult result;
};

struct EpochOutput {
  std::vector<PipelinePlan> plans;
  // One signal per push target; empty when no push was due.
  std::optional<PriceSignalMsg> price_push;
  std::vector<std::string> push_targets;     // healthy peers at push time
  std::vector<std::string> recovery_probes;  // unhealthy peers probed now
};

// One turn of the broker's control loop (market strategy): refresh the
// clearing table from inbox demand, plan each arrival in order against the
// local book and fresh peer quotes, commit accepted local reservations to
// the worker beliefs, and emit periodic price pushes and recovery probes.
// Periodic calls (empty inbox, made every delta_health_s) advance the epoch
// counter; arrival-driven calls do not.
EpochOutput mape_epoch(BrokerState& b, double now_s,
                       const std::vector<EpochArrival>& inbox, bool periodic,
                       const MarketConfig& mcfg, const FederationConfig& fcfg);

}  // namespace fedmarket
