/**
 * @file strategies.cpp
 */

#include "fedmarket/strategies.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "fedmarket/errors.hpp"

namespace fedmarket {

namespace {

constexpr double k_inf = std::numeric_limits<double>::infinity();

// Dense view of a template: stage index <-> id, adjacency, topo order.
struct StageIndex {
  std::vector<int> ids;               // dense index -> stage id (ascending)
  std::map<int, int> dense;           // stage id -> dense index
  std::vector<const StageSpec*> spec; // by dense index
  std::vector<std::vector<int>> children, parents;
  std::vector<int> topo;              // dense indices
  bool arborescent = false;           // every stage has at most one parent

  explicit StageIndex(const PipelineTemplate& t) {
    for (const auto& s : t.stages) ids.push_back(s.stage_id);
    std::sort(ids.begin(), ids.end());
    for (size_t i = 0; i < ids.size(); ++i) dense[ids[i]] = static_cast<int>(i);
    spec.resize(ids.size());
    for (const auto& s : t.stages) spec[static_cast<size_t>(dense[s.stage_id])] = &s;
    children.resize(ids.size());
    parents.resize(ids.size());
    for (const auto& e : t.edges) {
      int u = dense.at(e.from), v = dense.at(e.to);
      children[static_cast<size_t>(u)].push_back(v);
      parents[static_cast<size_t>(v)].push_back(u);
    }
    std::vector<std::pair<int, int>> es;
    for (const auto& e : t.edges) es.emplace_back(dense.at(e.from), dense.at(e.to));
    topo = topo_order_edges(static_cast<int>(ids.size()), es);
    arborescent = true;
    for (const auto& p : parents)
      if (p.size() > 1) arborescent = false;
  }
};

bool stage_allows(const StageSpec& s, const WorkerView& wv,
                  const std::string& origin) {
  if (!wv.alive || wv.suspect) return false;
  if (!slice_compatible(wv.spec.tier, s.slice)) return false;
  if (s.sovereignty == Sovereignty::local_only && wv.spec.domain != origin)
    return false;
  return true;
}

int count_domains(const std::map<int, int>& assignment, const TopologySnapshot& snap) {
  std::set<std::string> doms;
  for (const auto& [sid, wid] : assignment) {
    (void)sid;
    doms.insert(snap.find(wid)->spec.domain);
  }
  return static_cast<int>(doms.size());
}

PlacementDecision rejected(const std::string& why) {
  PlacementDecision d;
  d.reject_reason = why;
  return d;
}

PlacementDecision finish(std::map<int, int> assignment, const PipelineTemplate& t,
                         const TopologySnapshot& snap, const CostWeights& w) {
  PlacementDecision d;
  d.accepted = true;
  d.assignment = std::move(assignment);
  d.total_cost = placement_cost(d.assignment, t, snap, w);
  d.domains_crossed = count_domains(d.assignment, snap);
  return d;
}

}  // namespace

/* ==================================================================== */
/* Snapshot                                                              */
/* ==================================================================== */

const WorkerView* TopologySnapshot::find(int worker_id) const {
  for (const auto& wv : workers)
    if (wv.spec.worker_id == worker_id) return &wv;
  return nullptr;
}

double TopologySnapshot::expected_link_ms(int worker_a, int worker_b) const {
  if (worker_a == worker_b) return 0.0;
  const WorkerView* a = find(worker_a);
  const WorkerView* b = find(worker_b);
  if (!a || !b) throw StructuralError("expected_link_ms: unknown worker");
  return a->spec.site == b->spec.site ? lan_ms : wan_ms;
}

/* ==================================================================== */
/* Cost                                                                  */
/* ==================================================================== */

double placement_cost(const std::map<int, int>& assignment,
                      const PipelineTemplate& t, const TopologySnapshot& snap,
                      const CostWeights& w) {
  for (const auto& s : t.stages)
    if (!assignment.count(s.stage_id))
      throw StructuralError("placement_cost: stage " + std::to_string(s.stage_id) +
                            " unassigned");
  double latency = 0.0;
  for (const auto& e : t.edges)
    latency += snap.expected_link_ms(assignment.at(e.from), assignment.at(e.to));
  double util = 0.0;
  for (const auto& s : t.stages) {
    const WorkerView* wv = snap.find(assignment.at(s.stage_id));
    if (!wv) throw StructuralError("placement_cost: unknown worker");
    util += s.demand / wv->spec.capacity;
  }
  return w.alpha * latency + w.beta * util + w.zeta * count_domains(assignment, snap);
}

/* ==================================================================== */
/* Oracle                                                                */
/* ==================================================================== */

namespace {

// One domain-subset attempt. Returns the alpha+beta part of the cost (the
// crossing term is constant inside a subset) or infinity when infeasible.
struct SubsetSolver {
  const StageIndex& sx;
  const TopologySnapshot& snap;
  const CostWeights& w;
  const std::string& origin;
  std::vector<int> usable;  // worker indices into snap.workers

  // (cost, loaded units, id) preference key.
  struct Key {
    double cost;
    double load;
    int id;
    bool operator<(const Key& o) const {
      if (cost != o.cost) return cost < o.cost;
      if (load != o.load) return load < o.load;
      return id < o.id;
    }
  };

  std::vector<int> candidates(int v) const {
    std::vector<int> out;
    for (int wi : usable)
      if (stage_allows(*sx.spec[static_cast<size_t>(v)],
                       snap.workers[static_cast<size_t>(wi)], origin) &&
          snap.workers[static_cast<size_t>(wi)].load +
                  sx.spec[static_cast<size_t>(v)]->demand <=
              snap.workers[static_cast<size_t>(wi)].spec.capacity + 1e-9)
        out.push_back(wi);
    return out;
  }

  double link(int wi, int wj) const {
    return snap.expected_link_ms(snap.workers[static_cast<size_t>(wi)].spec.worker_id,
                                 snap.workers[static_cast<size_t>(wj)].spec.worker_id);
  }

  double beta_term(int v, int wi) const {
    return w.beta * sx.spec[static_cast<size_t>(v)]->demand /
           snap.workers[static_cast<size_t>(wi)].spec.capacity;
  }

  // Exact bottom-up DP for arborescent pipelines (capacity handled later by
  // the repair pass). Fills `out` with dense-stage -> worker-index.
  bool solve_tree(std::vector<int>& out) {
    size_t n = sx.ids.size();
    std::vector<std::vector<double>> dp(n);
    std::vector<std::vector<std::vector<int>>> pick(n);  // [v][wi slot][child slot]
    std::vector<std::vector<int>> cand(n);
    for (size_t v = 0; v < n; ++v) cand[v] = candidates(static_cast<int>(v));

    for (auto it = sx.topo.rbegin(); it != sx.topo.rend(); ++it) {
      int v = *it;
      const auto& cs = cand[static_cast<size_t>(v)];
      if (cs.empty()) return false;
      auto& dpv = dp[static_cast<size_t>(v)];
      auto& pkv = pick[static_cast<size_t>(v)];
      dpv.assign(cs.size(), 0.0);
      pkv.assign(cs.size(), {});
      for (size_t a = 0; a < cs.size(); ++a) {
        dpv[a] = beta_term(v, cs[a]);
        for (int c : sx.children[static_cast<size_t>(v)]) {
          const auto& ccs = cand[static_cast<size_t>(c)];
          double best = k_inf;
          Key best_key{k_inf, k_inf, -1};
          int best_slot = -1;
          for (size_t b = 0; b < ccs.size(); ++b) {
            double val = w.alpha * link(cs[a], ccs[b]) +
                         dp[static_cast<size_t>(c)][b];
            Key key{val, snap.workers[static_cast<size_t>(ccs[b])].load,
                    snap.workers[static_cast<size_t>(ccs[b])].spec.worker_id};
            if (key < best_key) {
              best_key = key;
              best = val;
              best_slot = static_cast<int>(b);
            }
          }
          dpv[a] += best;
          pkv[a].push_back(best_slot);
        }
      }
    }

    // Select roots, then walk down the recorded picks.
    out.assign(n, -1);
    std::vector<int> slot(n, -1);
    for (int v : sx.topo) {
      if (!sx.parents[static_cast<size_t>(v)].empty()) continue;
      const auto& cs = cand[static_cast<size_t>(v)];
      Key best_key{k_inf, k_inf, -1};
      int best_slot = -1;
      for (size_t a = 0; a < cs.size(); ++a) {
        Key key{dp[static_cast<size_t>(v)][a],
                snap.workers[static_cast<size_t>(cs[a])].load,
                snap.workers[static_cast<size_t>(cs[a])].spec.worker_id};
        if (key < best_key) {
          best_key = key;
          best_slot = static_cast<int>(a);
        }
      }
      slot[static_cast<size_t>(v)] = best_slot;
    }
    for (int v : sx.topo) {
      int a = slot[static_cast<size_t>(v)];
      if (a < 0) continue;  // unreachable only if graph were cyclic
      out[static_cast<size_t>(v)] = cand[static_cast<size_t>(v)][static_cast<size_t>(a)];
      const auto& kids = sx.children[static_cast<size_t>(v)];
      for (size_t ci = 0; ci < kids.size(); ++ci)
        slot[static_cast<size_t>(kids[ci])] =
            pick[static_cast<size_t>(v)][static_cast<size_t>(a)][ci];
    }
    return true;
  }

  // Greedy topological assignment of incremental cost for general DAGs.
  // Accounts capacity as it goes. Equal-cost candidates either pack onto
  // the lowest id (the way sequential reservations stack) or spread by
  // the demand already placed this round.
  bool solve_greedy(std::vector<int>& out, bool spread) {
    size_t n = sx.ids.size();
    out.assign(n, -1);
    std::map<int, double> extra;  // worker index -> demand placed this round
    for (int v : sx.topo) {
      const StageSpec& s = *sx.spec[static_cast<size_t>(v)];
      Key best_key{k_inf, k_inf, -1};
      int best = -1;
      for (int wi : candidates(v)) {
        const WorkerView& wv = snap.workers[static_cast<size_t>(wi)];
        if (wv.load + extra[wi] + s.demand > wv.spec.capacity + 1e-9) continue;
        double inc = beta_term(v, wi);
        for (int p : sx.parents[static_cast<size_t>(v)])
          inc += w.alpha * link(out[static_cast<size_t>(p)], wi);
        Key key{inc, wv.load + (spread ? extra[wi] : 0.0),
                wv.spec.worker_id};
        if (key < best_key) {
          best_key = key;
          best = wi;
        }
      }
      if (best < 0) return false;
      out[static_cast<size_t>(v)] = best;
      extra[best] += s.demand;
    }
    return true;
  }

  // Topological-order capacity repair for the tree DP's assignment: stages
  // that would overbook move to the cheapest feasible alternative, judged
  // by edges to already-final predecessors.
  bool repair(std::vector<int>& asg, bool spread) {
    std::map<int, double> extra;
    for (int v : sx.topo) {
      const StageSpec& s = *sx.spec[static_cast<size_t>(v)];
      int wi = asg[static_cast<size_t>(v)];
      const WorkerView& wv = snap.workers[static_cast<size_t>(wi)];
      if (wv.load + extra[wi] + s.demand <= wv.spec.capacity + 1e-9) {
        extra[wi] += s.demand;
        continue;
      }
      Key best_key{k_inf, k_inf, -1};
      int best = -1;
      for (int alt : candidates(v)) {
        const WorkerView& av = snap.workers[static_cast<size_t>(alt)];
        if (av.load + extra[alt] + s.demand > av.spec.capacity + 1e-9) continue;
        double inc = beta_term(v, alt);
        for (int p : sx.parents[static_cast<size_t>(v)])
          inc += w.alpha * link(asg[static_cast<size_t>(p)], alt);
        Key key{inc, av.load + (spread ? extra[alt] : 0.0),
                av.spec.worker_id};
        if (key < best_key) {
          best_key = key;
          best = alt;
        }
      }
      if (best < 0) return false;
      asg[static_cast<size_t>(v)] = best;
      extra[best] += s.demand;
    }
    return true;
  }

  // Full cost of an assignment restricted to this subset's workers: the
  // latency and utilisation terms plus the crossing term at the number of
  // domains the assignment actually touches.
  double actual_cost(const std::vector<int>& asg) const {
    double c = 0.0;
    std::set<std::string> doms;
    for (size_t v = 0; v < asg.size(); ++v) {
      c += beta_term(static_cast<int>(v), asg[v]);
      doms.insert(snap.workers[static_cast<size_t>(asg[v])].spec.domain);
    }
    for (size_t v = 0; v < asg.size(); ++v)
      for (int ch : sx.children[v])
        c += w.alpha * link(asg[v], asg[static_cast<size_t>(ch)]);
    return c + w.zeta * static_cast<double>(doms.size());
  }

  // Deterministic first-improvement relocation search: move one stage at a
  // time while that strictly lowers the cost. Repairs the topological
  // greedy's myopia on branching pipelines (a stage placed early cannot see
  // which cut its successors will want) and is a no-op at a true optimum.
  void local_search(std::vector<int>& asg) {
    std::map<int, double> extra;
    for (size_t v = 0; v < asg.size(); ++v)
      extra[asg[v]] += sx.spec[v]->demand;
    double cur = actual_cost(asg);
    for (int sweep = 0; sweep < 64; ++sweep) {
      bool improved = false;
      for (int v : sx.topo) {
        int from = asg[static_cast<size_t>(v)];
        double dem = sx.spec[static_cast<size_t>(v)]->demand;
        for (int alt : candidates(v)) {
          if (alt == from) continue;
          const WorkerView& av = snap.workers[static_cast<size_t>(alt)];
          if (av.load + extra[alt] + dem > av.spec.capacity + 1e-9) continue;
          asg[static_cast<size_t>(v)] = alt;
          double trial = actual_cost(asg);
          if (trial < cur - 1e-12) {
            cur = trial;
            extra[from] -= dem;
            extra[alt] += dem;
            from = alt;
            improved = true;
          } else {
            asg[static_cast<size_t>(v)] = from;
          }
        }
      }
      if (!improved) break;
    }
  }

  bool start(std::vector<int>& out, bool spread) {
    if (sx.arborescent) return solve_tree(out) && repair(out, spread);
    return solve_greedy(out, spread);
  }

  // The descent runs from both tie policies and keeps the strictly cheaper
  // end state; on a tie the packing start wins, so quiet uniform topologies
  // place exactly like a sequence of cheapest reservations.
  bool solve(std::vector<int>& out) {
    std::vector<int> packed, spread;
    bool ok_p = start(packed, false);
    bool ok_s = start(spread, true);
    if (!ok_p && !ok_s) return false;
    if (ok_p) local_search(packed);
    if (ok_s) local_search(spread);
    if (!ok_s) {
      out = packed;
    } else if (!ok_p) {
      out = spread;
    } else {
      out = actual_cost(spread) < actual_cost(packed) - 1e-12 ? spread
                                                              : packed;
    }
    return true;
  }
};

}  // namespace

PlacementDecision oracle_place(const PipelineTemplate& t,
                               const std::string& origin_domain,
                               const TopologySnapshot& snap, const CostWeights& w) {
  StageIndex sx(t);
  bool pinned = false;
  for (const auto& s : t.stages)
    if (s.sovereignty == Sovereignty::local_only) pinned = true;

  std::vector<std::string> domains;
  for (const auto& wv : snap.workers)
    if (std::find(domains.begin(), domains.end(), wv.spec.domain) == domains.end())
      domains.push_back(wv.spec.domain);
  std::sort(domains.begin(), domains.end());
  if (domains.empty()) return rejected("no-feasible-worker");

  double best_total = k_inf;
  std::vector<int> best_asg;
  size_t nd = domains.size();
  for (uint64_t mask = 1; mask < (uint64_t{1} << nd); ++mask) {
    std::set<std::string> subset;
    for (size_t i = 0; i < nd; ++i)
      if (mask & (uint64_t{1} << i)) subset.insert(domains[i]);
    if (pinned && !subset.count(origin_domain)) continue;

    SubsetSolver solver{sx, snap, w, origin_domain, {}};
    for (size_t i = 0; i < snap.workers.size(); ++i)
      if (subset.count(snap.workers[i].spec.domain))
        solver.usable.push_back(static_cast<int>(i));
    if (solver.usable.empty()) continue;

    std::vector<int> asg;
    if (!solver.solve(asg)) continue;
    double total = solver.actual_cost(asg);
    if (total < best_total) {
      best_total = total;
      best_asg = asg;
    }
  }

  if (best_asg.empty()) return rejected("no-feasible-worker");
  std::map<int, int> assignment;
  for (size_t v = 0; v < best_asg.size(); ++v)
    assignment[sx.ids[v]] =
        snap.workers[static_cast<size_t>(best_asg[v])].spec.worker_id;
  return finish(std::move(assignment), t, snap, w);
}

PlacementDecision sharded_oracle_place(const PipelineTemplate& t,
                                       const std::string& origin_domain,
                                       const std::vector<TopologySnapshot>& pulled,
                                       const CostWeights& w) {
  if (pulled.empty()) return rejected("no-feasible-worker");
  TopologySnapshot merged;
  merged.lan_ms = pulled.front().lan_ms;
  merged.wan_ms = pulled.front().wan_ms;
  std::set<int> seen;
  for (const auto& snap : pulled)
    for (const auto& wv : snap.workers)
      if (seen.insert(wv.spec.worker_id).second) merged.workers.push_back(wv);
  std::sort(merged.workers.begin(), merged.workers.end(),
            [](const WorkerView& a, const WorkerView& b) {
              return a.spec.worker_id < b.spec.worker_id;
            });
  return oracle_place(t, origin_domain, merged, w);
}

/* ==================================================================== */
/* Round robin                                                           */
/* ==================================================================== */

PlacementDecision rr_place(const PipelineTemplate& t,
                           const std::string& origin_domain,
                           const TopologySnapshot& snap, int& rr_cursor) {
  std::vector<const WorkerView*> ring;
  for (const auto& wv : snap.workers) ring.push_back(&wv);
  std::sort(ring.begin(), ring.end(), [](const WorkerView* a, const WorkerView* b) {
    return a->spec.worker_id < b->spec.worker_id;
  });
  if (ring.empty()) return rejected("no-feasible-worker");
  int n = static_cast<int>(ring.size());
  rr_cursor = ((rr_cursor % n) + n) % n;

  PlacementDecision d;
  for (int sid : topo_order(t)) {
    const StageSpec& s = t.stage(sid);
    int chosen = -1;
    for (int k = 0; k < n; ++k) {
      const WorkerView* wv = ring[static_cast<size_t>((rr_cursor + k) % n)];
      // Deliberately no load or suspicion check: the baseline dispatches
      // blind, including to saturated workers.
      if (!wv->alive) continue;
      if (!slice_compatible(wv->spec.tier, s.slice)) continue;
      if (s.sovereignty == Sovereignty::local_only &&
          wv->spec.domain != origin_domain)
        continue;
      chosen = (rr_cursor + k) % n;
      break;
    }
    if (chosen < 0) return rejected("no-feasible-worker");
    d.assignment[sid] = ring[static_cast<size_t>(chosen)]->spec.worker_id;
    rr_cursor = (chosen + 1) % n;
  }
  return finish(std::move(d.assignment), t, snap, CostWeights{});
}

/* ==================================================================== */
/* Heuristics                                                            */
/* ==================================================================== */

PlacementDecision locality_place(const PipelineTemplate& t,
                                 const std::string& origin_domain,
                                 const TopologySnapshot& snap,
                                 const MarketConfig& cfg) {
  std::vector<WorkerView> local;
  for (const auto& wv : snap.workers)
    if (wv.spec.domain == origin_domain) local.push_back(wv);

  ReservationLedger ledger;
  std::map<int, int> assignment;
  for (int sid : topo_order(t)) {
    const StageSpec& s = t.stage(sid);
    // Cheapest reservable local worker; no saturated fallback — an
    // exhausted domain is this strategy's defined failure mode.
    std::optional<std::pair<double, int>> best;
    for (const auto& wv : local) {
      if (!stage_allows(s, wv, origin_domain)) continue;
      if (!ledger.can_reserve(wv.spec, wv.load, s.demand)) continue;
      double c = worker_cost(worker_bid(wv.spec, cfg), wv.load, wv.spec.capacity,
                             cfg.rho_max);
      std::pair<double, int> key{c, wv.spec.worker_id};
      if (!best || key < *best) best = key;
    }
    if (!best) return rejected("locality-exhausted");
    assignment[sid] = best->second;
    for (const auto& wv : local)
      if (wv.spec.worker_id == best->second)
        ledger.reserve(wv.spec, wv.load, s.demand);
  }
  return finish(std::move(assignment), t, snap, CostWeights{});
}

PlacementDecision latency_greedy_place(const PipelineTemplate& t,
                                       const std::string& origin_domain,
                                       const TopologySnapshot& snap) {
  // Site of the origin broker, taken from its registered workers.
  std::optional<Site> origin_site;
  for (const auto& wv : snap.workers)
    if (wv.spec.domain == origin_domain) {
      origin_site = wv.spec.site;
      break;
    }

  StageIndex sx(t);
  std::vector<int> asg(sx.ids.size(), -1);
  std::map<int, int> assignment;
  for (int v : sx.topo) {
    const StageSpec& s = *sx.spec[static_cast<size_t>(v)];
    double best_inc = k_inf;
    int best = -1, best_id = 0;
    for (size_t wi = 0; wi < snap.workers.size(); ++wi) {
      const WorkerView& wv = snap.workers[wi];
      if (!stage_allows(s, wv, origin_domain)) continue;
      double inc = 0.0;
      if (sx.parents[static_cast<size_t>(v)].empty()) {
        // First stages measure from the origin broker.
        if (wv.spec.domain != origin_domain)
          inc = (origin_site && wv.spec.site == *origin_site) ? snap.lan_ms
                                                              : snap.wan_ms;
      } else {
        for (int p : sx.parents[static_cast<size_t>(v)])
          inc += snap.expected_link_ms(
              snap.workers[static_cast<size_t>(asg[static_cast<size_t>(p)])]
                  .spec.worker_id,
              wv.spec.worker_id);
      }
      if (best < 0 || inc < best_inc ||
          (inc == best_inc && wv.spec.worker_id < best_id)) {
        best_inc = inc;
        best = static_cast<int>(wi);
        best_id = wv.spec.worker_id;
      }
    }
    if (best < 0) return rejected("no-feasible-worker");
    asg[static_cast<size_t>(v)] = best;
    assignment[sx.ids[static_cast<size_t>(v)]] =
        snap.workers[static_cast<size_t>(best)].spec.worker_id;
  }
  return finish(std::move(assignment), t, snap, CostWeights{});
}

PlacementDecision spillover_place(const PipelineTemplate& t,
                                  const std::string& origin_domain,
                                  const TopologySnapshot& snap) {
  // Domain visit order: origin, then ascending expected hop from it.
  std::map<std::string, Site> domain_site;
  for (const auto& wv : snap.workers)
    if (!domain_site.count(wv.spec.domain)) domain_site[wv.spec.domain] = wv.spec.site;
  std::vector<std::pair<double, std::string>> order;
  for (const auto& [dom, site] : domain_site) {
    double hop = 0.0;
    if (dom != origin_domain)
      hop = (domain_site.count(origin_domain) &&
             site == domain_site.at(origin_domain))
                ? snap.lan_ms
                : snap.wan_ms;
    order.emplace_back(hop, dom);
  }
  std::sort(order.begin(), order.end());

  ReservationLedger ledger;
  std::map<int, int> assignment;
  for (int sid : topo_order(t)) {
    const StageSpec& s = t.stage(sid);
    int chosen = -1;
    for (const auto& [hop, dom] : order) {
      (void)hop;
      // Least-loaded reservable worker of this domain, id tie-break.
      std::optional<std::pair<double, int>> best;
      for (const auto& wv : snap.workers) {
        if (wv.spec.domain != dom) continue;
        if (!stage_allows(s, wv, origin_domain)) continue;
        if (!ledger.can_reserve(wv.spec, wv.load, s.demand)) continue;
        std::pair<double, int> key{wv.load + ledger.booked(wv.spec.worker_id),
                                   wv.spec.worker_id};
        if (!best || key < *best) best = key;
      }
      if (best) {
        chosen = best->second;
        break;
      }
    }
    if (chosen < 0) return rejected("spillover-exhausted");
    assignment[sid] = chosen;
    ledger.reserve(snap.find(chosen)->spec, snap.find(chosen)->load, s.demand);
  }
  return finish(std::move(assignment), t, snap, CostWeights{});
}

}  // namespace fedmarket
