#pragma once
/**
 * @file market.hpp
 * @brief Per-domain resource market: congestion-priced worker costs,
 *        order-statistic clearing prices, local/remote trade decisions,
 *        intra-pipeline reservations and full pipeline placement.
 *
 * Prices quote the marginal pain of adding one load unit to a worker:
 * bid scaled by 1/(1 - utilisation), clamped so saturated workers stay
 * priced (expensively) rather than vanishing from the book.
 */

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedmarket/dag.hpp"

namespace fedmarket {

/* ==================================================================== */
/* Workers                                                               */
/* ==================================================================== */

enum class Site : uint8_t { edge, cloud };
const char* to_string(Site s);

struct WorkerSpec {
  int worker_id = -1;
  std::string domain;   // owning domain, e.g. "d2"
  Site site = Site::edge;
  Slice tier = Slice::best_effort;  // strictest slice this worker may serve
  double capacity = 4.0;            // admission bound, load units
  double speed = 1.0;               // service-time multiplier; scales the bid too
};

// A broker's belief about one worker: last probed load plus everything the
// broker itself dispatched since, and the health verdict.
struct WorkerView {
  WorkerSpec spec;
  double load = 0.0;
  bool alive = true;
  bool suspect = false;  // flagged after a dispatch timeout
};

struct MarketConfig {
  double base_bid = 10.0;
  double rho_max = 0.99;        // utilisation clamp; caps cost at 100x bid
  double wan_penalty_ms = 30.0; // flat adder on any cross-domain trade
};

// Ask price of an idle unit: base bid scaled by the speed factor, so slower
// hardware asks more per unit of work delivered.
double worker_bid(const WorkerSpec& w, const MarketConfig& cfg);

// Congestion-priced cost: bid / (1 - rho) with rho = min(load/capacity, rho_max).
double worker_cost(double bid, double load, double capacity, double rho_max = 0.99);

/* ==================================================================== */
/* Clearing prices                                                       */
/* ==================================================================== */

// Demand seen for one stage type within the current signalling round.
struct TypeDemand {
  Slice slice = Slice::embb;  // strictness the type requires
  int demand = 0;             // stage instances wanting a unit
};

struct ClearingRow {
  std::string stage_type;
  int supply = 0;       // eligible workers
  int demand_used = 0;  // order statistic actually taken
  double price = 0.0;
};

// Per stage type, the d-th cheapest eligible worker cost where
// d = min(demand, supply), with d = 0 promoted to 1 (an idle market still
// quotes its best ask). Workers tie by ascending id. Types with no eligible
// worker produce no row.
std::vector<ClearingRow> clearing_prices(const std::vector<WorkerView>& workers,
                                         const std::map<std::string, TypeDemand>& demand,
                                         const MarketConfig& cfg);

/* ==================================================================== */
/* Trade decisions                                                       */
/* ==================================================================== */

struct PriceQuote {
  std::string domain;
  double price = 0.0;  // peer's published clearing price for the type
};

struct TradeDecision {
  bool remote = false;
  std::string domain;            // meaningful when remote
  double effective_price = 0.0;  // what the buyer will be charged
};

// Remote wins only when some peer's price plus the WAN penalty strictly
// undercuts the local ask; ties stay local, peer ties resolve to the
// lexicographically first domain. No local ask means any peer wins.
std::optional<TradeDecision> trade_decision(std::optional<double> local_price,
                                            const std::vector<PriceQuote>& peers,
                                            const MarketConfig& cfg);

/* ==================================================================== */
/* Reservations                                                          */
/* ==================================================================== */

// Books load units against worker capacity for the duration of one pipeline
// placement round. Rejects anything that would overbook on top of the
// broker-view load.
class ReservationLedger {
 public:
  bool can_reserve(const WorkerSpec& w, double current_load, double units) const;
  // Returns false (and books nothing) when the reservation does not fit.
  bool reserve(const WorkerSpec& w, double current_load, double units);
  double booked(int worker_id) const;
  void clear();

 private:
  std::map<int, double> booked_;
};

/* ==================================================================== */
/* Pipeline placement                                                    */
/* ==================================================================== */

struct StagePlacement {
  int stage_id = -1;
  bool remote = false;
  int worker_id = -1;  // resolved for local stages; peer resolves remote ones
  std::string domain;
  double price = 0.0;  // charged against the pipeline's value budget
};

struct PlacementResult {
  bool accepted = false;
  std::string reject_reason;  // empty when accepted
  std::vector<StagePlacement> stages;
  double total_cost = 0.0;
};

// A peer domain's advertised state as known to the buying broker.
struct DomainQuote {
  std::map<std::string, double> price;  // stage type -> clearing price
};

// Cheapest eligible local worker for a stage: slice-compatible, alive, not
// suspect. Reservable workers outrank booked-out ones, then cost with id
// tie-break. Costs are quoted from the broker-view load only, so repeated
// stages stack onto one worker until its reservations exhaust the capacity;
// a fully booked domain still quotes its best saturated ask and leaves the
// admission decision to the value budget.
std::optional<std::pair<int, double>> cheapest_local(
    const StageSpec& stage, const std::vector<WorkerView>& workers,
    const ReservationLedger& ledger, const MarketConfig& cfg);

// One pipeline, one round: walk stages in topological order, price each
// locally, compare against peer quotes plus the WAN penalty, reserve local
// winners, and finally admit only if the summed prices fit the value budget.
// Stages pinned by residency never trade remotely.
PlacementResult market_place(const PipelineTemplate& t,
                             const std::string& origin_domain,
                             const std::vector<WorkerView>& local_workers,
                             const std::map<std::string, DomainQuote>& peers,
                             const MarketConfig& cfg);

}  // namespace fedmarket
