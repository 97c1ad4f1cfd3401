/**
 * @file federation.cpp
 */

#include "fedmarket/federation.hpp"

#include <algorithm>
#include <cmath>

#include "fedmarket/errors.hpp"

namespace fedmarket {

int FederationConfig::history_capacity() const {
  return static_cast<int>(std::ceil(staleness_bound_s() / delta_prop_s)) + 1;
}

/* ==================================================================== */
/* Peer knowledge                                                        */
/* ==================================================================== */

void on_price_push_result(PeerView& pv, bool success, const FederationConfig& cfg) {
  if (success) {
    pv.consecutive_misses = 0;
    pv.healthy = true;
    return;
  }
  if (++pv.consecutive_misses >= cfg.k_miss && pv.healthy) {
    pv.healthy = false;
    pv.last_price.reset();
    pv.last_summary.reset();
    pv.price_history.clear();
  }
}

void record_price_signal(PeerView& pv, double now_s, const PriceSignalMsg& msg,
                         const FederationConfig& cfg) {
  pv.last_price = msg;
  pv.price_history.emplace_back(now_s, msg);
  std::stable_sort(pv.price_history.begin(), pv.price_history.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  while (pv.price_history.size() >
         static_cast<size_t>(cfg.history_capacity()))
    pv.price_history.pop_front();
}

void reinstate_peer(PeerView& pv, double now_s,
                    const std::vector<std::pair<double, PriceSignalMsg>>& peer_history,
                    const FederationConfig& cfg) {
  pv.healthy = true;
  pv.consecutive_misses = 0;
  for (const auto& [t, msg] : peer_history) {
    bool dup = false;
    for (const auto& [t2, msg2] : pv.price_history)
      if (t2 == t && msg2.origin_domain == msg.origin_domain) dup = true;
    if (!dup) pv.price_history.emplace_back(t, msg);
  }
  std::stable_sort(pv.price_history.begin(), pv.price_history.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  while (pv.price_history.size() >
         static_cast<size_t>(cfg.history_capacity()))
    pv.price_history.pop_front();
  if (!pv.price_history.empty()) {
    const auto& [t, msg] = pv.price_history.back();
    if (now_s - t <= cfg.staleness_bound_s()) pv.last_price = msg;
  }
}

std::optional<PriceSignalMsg> fresh_price(const PeerView& pv, double now_s,
                                          const FederationConfig& cfg) {
  if (!pv.healthy || !pv.last_price) return std::nullopt;
  if (now_s - pv.last_price->issued_at_s > cfg.staleness_bound_s() + 1e-12)
    return std::nullopt;
  return pv.last_price;
}

/* ==================================================================== */
/* Governance                                                            */
/* ==================================================================== */

const char* to_string(GovernanceScenario s) {
  switch (s) {
    case GovernanceScenario::A: return "A";
    case GovernanceScenario::B: return "B";
    case GovernanceScenario::C: return "C";
    case GovernanceScenario::D: return "D";
  }
  return "?";
}

GovernanceScenario governance_scenario_from_name(const std::string& name) {
  if (name == "A") return GovernanceScenario::A;
  if (name == "B") return GovernanceScenario::B;
  if (name == "C") return GovernanceScenario::C;
  if (name == "D") return GovernanceScenario::D;
  throw ConfigError("unknown governance scenario: " + name);
}

double GovernancePolicy::trust_of(const std::string& peer) const {
  auto it = trust.find(peer);
  return it == trust.end() ? 1.0 : it->second;
}

bool GovernancePolicy::enforces(Site site) const {
  switch (scenario) {
    case GovernanceScenario::A: return false;
    case GovernanceScenario::B: return site == Site::edge;
    case GovernanceScenario::C: return site == Site::cloud;
    case GovernanceScenario::D: return true;
  }
  return true;
}

PipelineTemplate apply_governance(const PipelineTemplate& t,
                                  const GovernancePolicy& policy,
                                  Site origin_site) {
  PipelineTemplate out = t;
  bool enforcing = policy.enforces(origin_site);
  for (auto& s : out.stages) {
    bool wants_local = s.sovereignty == Sovereignty::local_only ||
                       policy.local_only_types.count(s.stage_type) > 0;
    s.sovereignty = (enforcing && wants_local) ? Sovereignty::local_only
                                               : Sovereignty::free;
  }
  return out;
}

/* ==================================================================== */
/* Publication routing                                                   */
/* ==================================================================== */

namespace {

// FNV-1a then splitmix64: stable across platforms, unlike std::hash.
uint64_t stable_hash(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::array<double, k_centroid_dims> type_centroid(const std::string& stage_type) {
  std::array<double, k_centroid_dims> v{};
  uint64_t state = stable_hash(stage_type);
  for (auto& x : v)
    x = static_cast<double>(splitmix64(state) >> 11) /
        static_cast<double>(1ULL << 53);
  return v;
}

std::vector<RouteCandidate> route_publication(
    const std::map<std::string, PeerView>& peers,
    const std::array<double, k_centroid_dims>& content, double distance_threshold,
    double required_trust, const GovernancePolicy& policy) {
  std::vector<RouteCandidate> out;
  for (const auto& [dom, pv] : peers) {
    if (!pv.healthy || !pv.last_summary) continue;
    if (policy.trust_of(dom) < required_trust) continue;
    double best = -1.0;
    for (const auto& c : pv.last_summary->clusters) {
      if (c.capacity <= 0.0) continue;
      double d2 = 0.0;
      for (int i = 0; i < k_centroid_dims; ++i) {
        double d = content[static_cast<size_t>(i)] -
                   c.centroid[static_cast<size_t>(i)];
        d2 += d * d;
      }
      double dist = std::sqrt(d2);
      if (dist <= distance_threshold + 1e-12 && (best < 0.0 || dist < best))
        best = dist;
    }
    if (best >= 0.0) out.push_back({dom, best});
  }
  std::sort(out.begin(), out.end(), [](const RouteCandidate& a,
                                       const RouteCandidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.peer_domain < b.peer_domain;
  });
  return out;
}

/* ==================================================================== */
/* Broker epoch                                                          */
/* ==================================================================== */

WorkerView* BrokerState::find_worker(int worker_id) {
  for (auto& wv : workers)
    if (wv.spec.worker_id == worker_id) return &wv;
  return nullptr;
}

EpochOutput mape_epoch(BrokerState& b, double now_s,
                       const std::vector<EpochArrival>& inbox, bool periodic,
                       const MarketConfig& mcfg, const FederationConfig& fcfg) {
  EpochOutput out;

  // Analyse: price the local book against the demand seen this round. Slice
  // strictness per type is recovered from the arriving stages; idle types
  // keep publishing their best ask.
  std::map<std::string, TypeDemand> demand;
  for (const auto& ty : b.known_types) demand[ty];  // zero-demand rows
  for (const auto& arr : inbox)
    for (const auto& s : arr.t->stages) {
      TypeDemand& td = demand[s.stage_type];
      td.demand += 1;
      td.slice = s.slice;
    }
  b.clearing.clear();
  for (const auto& row : clearing_prices(b.workers, demand, mcfg))
    b.clearing[row.stage_type] = row.price;

  // Plan + Execute: pipelines in arrival order against fresh peer quotes.
  std::map<std::string, DomainQuote> quotes;
  for (const auto& [dom, pv] : b.peers)
    if (auto sig = fresh_price(pv, now_s, fcfg))
      quotes[dom].price = sig->price;

  for (const auto& arr : inbox) {
    PipelinePlan plan;
    plan.pipeline_id = arr.pipeline_id;
    PipelineTemplate eff = apply_governance(*arr.t, b.governance, b.site);
    plan.result = market_place(eff, b.domain, b.workers, quotes, mcfg);
    if (plan.result.accepted) {
      // Knowledge: commit this round's local reservations to the belief.
      for (const auto& sp : plan.result.stages) {
        if (sp.remote) continue;
        if (WorkerView* wv = b.find_worker(sp.worker_id))
          wv->load += eff.stage(sp.stage_id).demand;
      }
    }
    out.plans.push_back(std::move(plan));
  }

  if (periodic) {
    b.epoch_counter += 1;
    if (now_s + 1e-9 >= b.next_push_due_s) {
      PriceSignalMsg msg;
      msg.origin_domain = b.domain;
      msg.issued_at_s = now_s;
      msg.price = b.clearing;
      out.price_push = std::move(msg);
      for (const auto& [dom, pv] : b.peers)
        if (pv.healthy) out.push_targets.push_back(dom);
      b.next_push_due_s = now_s + fcfg.delta_prop_s;
    }
    if (fcfg.recovery_probe_every > 0 &&
        b.epoch_counter % fcfg.recovery_probe_every == 0)
      for (const auto& [dom, pv] : b.peers)
        if (!pv.healthy) out.recovery_probes.push_back(dom);
  }
  return out;
}

}  // namespace fedmarket
