/**
 * @file market.cpp
 */

#include "fedmarket/market.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedmarket/errors.hpp"

namespace fedmarket {

const char* to_string(Site s) { return s == Site::edge ? "edge" : "cloud"; }

/* ==================================================================== */
/* Pricing                                                               */
/* ==================================================================== */

double worker_bid(const WorkerSpec& w, const MarketConfig& cfg) {
  return cfg.base_bid * w.speed;
}

double worker_cost(double bid, double load, double capacity, double rho_max) {
  if (capacity <= 0.0) throw StructuralError("worker_cost: non-positive capacity");
  if (bid <= 0.0) throw StructuralError("worker_cost: non-positive bid");
  double rho = std::min(std::max(load, 0.0) / capacity, rho_max);
  return bid / (1.0 - rho);
}

/* ==================================================================== */
/* Clearing                                                              */
/* ==================================================================== */

std::vector<ClearingRow> clearing_prices(const std::vector<WorkerView>& workers,
                                         const std::map<std::string, TypeDemand>& demand,
                                         const MarketConfig& cfg) {
  std::vector<ClearingRow> rows;
  for (const auto& [type, td] : demand) {
    // Cost book for this type: eligible workers, cheapest first, id tie-break.
    std::vector<std::pair<double, int>> book;
    for (const auto& wv : workers) {
      if (!wv.alive) continue;
      if (!slice_compatible(wv.spec.tier, td.slice)) continue;
      double c = worker_cost(worker_bid(wv.spec, cfg), wv.load, wv.spec.capacity,
                             cfg.rho_max);
      book.emplace_back(c, wv.spec.worker_id);
    }
    if (book.empty()) continue;
    std::sort(book.begin(), book.end());
    ClearingRow row;
    row.stage_type = type;
    row.supply = static_cast<int>(book.size());
    row.demand_used = std::max(1, std::min(td.demand, row.supply));
    row.price = book[static_cast<size_t>(row.demand_used - 1)].first;
    rows.push_back(std::move(row));
  }
  return rows;
}

/* ==================================================================== */
/* Trade                                                                 */
/* ==================================================================== */

std::optional<TradeDecision> trade_decision(std::optional<double> local_price,
                                            const std::vector<PriceQuote>& peers,
                                            const MarketConfig& cfg) {
  std::optional<TradeDecision> best_remote;
  for (const auto& q : peers) {
    double eff = q.price + cfg.wan_penalty_ms;
    if (!best_remote || eff < best_remote->effective_price ||
        (eff == best_remote->effective_price && q.domain < best_remote->domain)) {
      best_remote = TradeDecision{true, q.domain, eff};
    }
  }
  if (local_price) {
    if (!best_remote || *local_price <= best_remote->effective_price)
      return TradeDecision{false, "", *local_price};
    return best_remote;
  }
  return best_remote;  // possibly empty: nobody can serve
}

/* ==================================================================== */
/* Reservations                                                          */
/* ==================================================================== */

bool ReservationLedger::can_reserve(const WorkerSpec& w, double current_load,
                                    double units) const {
  if (units <= 0.0) throw StructuralError("reserve: non-positive units");
  double b = booked(w.worker_id);
  return current_load + b + units <= w.capacity + 1e-9;
}

bool ReservationLedger::reserve(const WorkerSpec& w, double current_load,
                                double units) {
  if (!can_reserve(w, current_load, units)) return false;
  booked_[w.worker_id] += units;
  return true;
}

double ReservationLedger::booked(int worker_id) const {
  auto it = booked_.find(worker_id);
  return it == booked_.end() ? 0.0 : it->second;
}

void ReservationLedger::clear() { booked_.clear(); }

/* ==================================================================== */
/* Placement                                                             */
/* ==================================================================== */

std::optional<std::pair<int, double>> cheapest_local(
    const StageSpec& stage, const std::vector<WorkerView>& workers,
    const ReservationLedger& ledger, const MarketConfig& cfg) {
  // Reservable workers outrank booked-out ones; within a class the cheapest
  // cost wins with id tie-break. A fully booked domain still quotes its
  // best (saturated) ask so that admission control happens at the budget,
  // not by silent disappearance from the book.
  std::optional<std::pair<double, int>> best_fit, best_full;
  for (const auto& wv : workers) {
    if (!wv.alive || wv.suspect) continue;
    if (!slice_compatible(wv.spec.tier, stage.slice)) continue;
    double c = worker_cost(worker_bid(wv.spec, cfg), wv.load, wv.spec.capacity,
                           cfg.rho_max);
    std::pair<double, int> key{c, wv.spec.worker_id};
    auto& slot = ledger.can_reserve(wv.spec, wv.load, stage.demand) ? best_fit
                                                                    : best_full;
    if (!slot || key < *slot) slot = key;
  }
  const auto& pick = best_fit ? best_fit : best_full;
  if (!pick) return std::nullopt;
  return std::make_pair(pick->second, pick->first);
}

PlacementResult market_place(const PipelineTemplate& t,
                             const std::string& origin_domain,
                             const std::vector<WorkerView>& local_workers,
                             const std::map<std::string, DomainQuote>& peers,
                             const MarketConfig& cfg) {
  PlacementResult res;
  ReservationLedger ledger;
  std::map<int, const WorkerView*> by_id;
  for (const auto& wv : local_workers) by_id[wv.spec.worker_id] = &wv;

  for (int sid : topo_order(t)) {
    const StageSpec& stage = t.stage(sid);
    auto local = cheapest_local(stage, local_workers, ledger, cfg);
    std::optional<double> local_price;
    if (local) local_price = local->second;

    std::vector<PriceQuote> quotes;
    if (stage.sovereignty == Sovereignty::free) {
      for (const auto& [dom, q] : peers) {
        if (dom == origin_domain) continue;
        auto it = q.price.find(stage.stage_type);
        if (it != q.price.end()) quotes.push_back({dom, it->second});
      }
    }

    auto deal = trade_decision(local_price, quotes, cfg);
    if (!deal) {
      res.reject_reason = stage.sovereignty == Sovereignty::local_only
                              ? "residency-unplaceable"
                              : "no-feasible-worker";
      return res;
    }

    StagePlacement sp;
    sp.stage_id = sid;
    sp.price = deal->effective_price;
    if (deal->remote) {
      sp.remote = true;
      sp.domain = deal->domain;
    } else {
      sp.domain = origin_domain;
      sp.worker_id = local->first;
      // May fail on a saturated fallback pick; the quoted price already
      // carries the saturation and the budget gate decides admission.
      (void)ledger.reserve(by_id.at(sp.worker_id)->spec,
                           by_id.at(sp.worker_id)->load, stage.demand);
    }
    res.total_cost += sp.price;
    res.stages.push_back(std::move(sp));
  }

  if (res.total_cost > t.value_budget) {
    res.stages.clear();
    res.reject_reason = "over-budget";
    return res;
  }
  res.accepted = true;
  return res;
}

}  // namespace fedmarket
