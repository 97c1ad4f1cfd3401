/**
 * @file test_strategies.cpp
 * @brief Placement strategies: cost function anchors, oracle vs exhaustive
 *        enumeration, baselines and heuristics.
 */

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>

#include "doctest.h"
#include "fedmarket/errors.hpp"
#include "fedmarket/strategies.hpp"

using namespace fedmarket;

namespace {

WorkerView mk_wv(int id, const std::string& domain, Site site, double load = 0.0,
                 Slice tier = Slice::urllc, double cap = 4.0) {
  WorkerView wv;
  wv.spec.worker_id = id;
  wv.spec.domain = domain;
  wv.spec.site = site;
  wv.spec.tier = tier;
  wv.spec.capacity = cap;
  wv.spec.speed = 1.0;
  wv.load = load;
  return wv;
}

PipelineTemplate chain_template(int n, Slice slice = Slice::embb) {
  PipelineTemplate t;
  t.kind = "chain";
  t.value_budget = 800.0;
  for (int i = 0; i < n; ++i) {
    StageSpec s;
    s.stage_id = i;
    s.stage_type = "t" + std::to_string(i);
    s.slice = slice;
    t.stages.push_back(s);
  }
  for (int i = 0; i + 1 < n; ++i) t.edges.push_back({i, i + 1, std::nullopt});
  validate_template(t);
  return t;
}

// Reference optimum: every |workers|^|stages| assignment, filtered by
// liveness, slice, residency and summed per-worker capacity, scored with
// placement_cost. Only practical at desk scale.
std::optional<double> exhaustive_min_cost(const PipelineTemplate& t,
                                          const std::string& origin,
                                          const TopologySnapshot& snap,
                                          const CostWeights& w) {
  std::vector<int> sids;
  for (const auto& s : t.stages) sids.push_back(s.stage_id);
  size_t n = sids.size(), nw = snap.workers.size();
  std::vector<size_t> pick(n, 0);
  std::optional<double> best;
  while (true) {
    bool ok = true;
    std::map<int, double> used;
    std::map<int, int> asg;
    for (size_t i = 0; i < n && ok; ++i) {
      const StageSpec& s = t.stage(sids[i]);
      const WorkerView& wv = snap.workers[pick[i]];
      if (!wv.alive || wv.suspect) ok = false;
      if (!slice_compatible(wv.spec.tier, s.slice)) ok = false;
      if (s.sovereignty == Sovereignty::local_only && wv.spec.domain != origin)
        ok = false;
      used[wv.spec.worker_id] += s.demand;
      if (used[wv.spec.worker_id] + wv.load > wv.spec.capacity + 1e-9) ok = false;
      asg[sids[i]] = wv.spec.worker_id;
    }
    if (ok) {
      double c = placement_cost(asg, t, snap, w);
      if (!best || c < *best) best = c;
    }
    size_t i = 0;
    for (; i < n; ++i) {
      if (++pick[i] < nw) break;
      pick[i] = 0;
    }
    if (i == n) break;
  }
  return best;
}

}  // namespace

/* ==================================================================== */

TEST_CASE("placement cost matches hand-computed anchors") {
  CostWeights w;
  TopologySnapshot snap;
  snap.workers = {mk_wv(0, "d1", Site::edge), mk_wv(1, "d3", Site::cloud)};

  PipelineTemplate one = chain_template(1);
  CHECK(placement_cost({{0, 0}}, one, snap, w) == doctest::Approx(1.25));

  PipelineTemplate two = chain_template(2);
  // Same worker: no latency, one domain.
  CHECK(placement_cost({{0, 0}, {1, 0}}, two, snap, w) ==
        doctest::Approx(0.0 + 0.5 + 1.0));
  // Split across edge and cloud: WAN expectation plus two domains.
  CHECK(placement_cost({{0, 0}, {1, 1}}, two, snap, w) ==
        doctest::Approx(50.0 + 0.5 + 2.0));

  // Same site, different workers: LAN hop.
  snap.workers.push_back(mk_wv(2, "d1", Site::edge));
  CHECK(placement_cost({{0, 0}, {1, 2}}, two, snap, w) ==
        doctest::Approx(0.5 + 0.5 + 1.0));

  // Missing stage is a structural error.
  CHECK_THROWS_AS(placement_cost({{0, 0}}, two, snap, w), StructuralError);
}

TEST_CASE("placement cost is invariant under worker id relabeling") {
  CostWeights w;
  std::mt19937_64 rng(41);
  PipelineTemplate t = build_template("cqi-chain");
  for (int trial = 0; trial < 20; ++trial) {
    TopologySnapshot snap;
    for (int i = 0; i < 6; ++i)
      snap.workers.push_back(mk_wv(i, i < 3 ? "d1" : "d2",
                                   i % 2 ? Site::edge : Site::cloud,
                                   static_cast<double>(rng() % 3)));
    std::map<int, int> asg;
    for (const auto& s : t.stages)
      asg[s.stage_id] = static_cast<int>(rng() % snap.workers.size());
    double base = placement_cost(asg, t, snap, w);

    // Relabel ids by +100 and shuffle the worker list.
    TopologySnapshot renamed = snap;
    for (auto& wv : renamed.workers) wv.spec.worker_id += 100;
    std::shuffle(renamed.workers.begin(), renamed.workers.end(), rng);
    std::map<int, int> renamed_asg;
    for (const auto& [sid, wid] : asg) renamed_asg[sid] = wid + 100;
    CHECK(placement_cost(renamed_asg, t, renamed, w) == doctest::Approx(base));
  }
}

/* ==================================================================== */

TEST_CASE("oracle tree DP equals exhaustive enumeration on a two-stage chain") {
  CostWeights w;
  TopologySnapshot snap;
  snap.workers = {mk_wv(0, "d1", Site::edge), mk_wv(1, "d1", Site::edge)};
  PipelineTemplate t = chain_template(2);
  PlacementDecision d = oracle_place(t, "d1", snap, w);
  REQUIRE(d.accepted);
  auto ref = exhaustive_min_cost(t, "d1", snap, w);
  REQUIRE(ref.has_value());
  CHECK(d.total_cost == doctest::Approx(*ref));
  // Both stages stack on one worker: 0 latency beats the LAN hop.
  CHECK(d.assignment.at(0) == d.assignment.at(1));
  CHECK(d.domains_crossed == 1);
}

TEST_CASE("oracle tree DP equals exhaustive enumeration on random small instances") {
  CostWeights w;
  std::mt19937_64 rng(1234);
  int accepted = 0, rejections = 0;
  for (int trial = 0; trial < 60; ++trial) {
    int n = 2 + static_cast<int>(rng() % 3);   // 2..4 stages
    int nw = 2 + static_cast<int>(rng() % 5);  // 2..6 workers
    PipelineTemplate t;
    t.kind = "rand";
    t.value_budget = 800.0;
    for (int i = 0; i < n; ++i) {
      StageSpec s;
      s.stage_id = i;
      s.stage_type = "t" + std::to_string(i);
      s.slice = (rng() % 3 == 0) ? Slice::urllc : Slice::embb;
      t.stages.push_back(s);
    }
    for (int v = 1; v < n; ++v)
      t.edges.push_back({static_cast<int>(rng() % v), v, std::nullopt});
    if (rng() % 2) t.stages.back().sovereignty = Sovereignty::local_only;
    validate_template(t);

    TopologySnapshot snap;
    for (int i = 0; i < nw; ++i) {
      // Capacity 8 with load ≤ 4 keeps capacity non-binding for ≤ 4 stages,
      // which is the regime where the DP is provably exact.
      WorkerView wv = mk_wv(i, rng() % 2 ? "d1" : "d2",
                            rng() % 2 ? Site::edge : Site::cloud,
                            static_cast<double>(rng() % 5),
                            rng() % 3 ? Slice::urllc : Slice::embb, 8.0);
      snap.workers.push_back(wv);
    }

    PlacementDecision d = oracle_place(t, "d1", snap, w);
    auto ref = exhaustive_min_cost(t, "d1", snap, w);
    if (ref.has_value()) {
      REQUIRE(d.accepted);
      CHECK(d.total_cost == doctest::Approx(*ref).epsilon(1e-12));
      ++accepted;
    } else {
      CHECK_FALSE(d.accepted);
      ++rejections;
    }
  }
  CHECK(accepted > 10);  // the generator must exercise the accept path
  (void)rejections;
}

TEST_CASE("oracle rejects when capacity cannot fit the pipeline") {
  CostWeights w;
  TopologySnapshot snap;
  snap.workers = {mk_wv(0, "d1", Site::edge)};  // capacity 4
  PlacementDecision d = oracle_place(chain_template(8), "d1", snap, w);
  CHECK_FALSE(d.accepted);
  CHECK(d.reject_reason == "no-feasible-worker");

  // Two workers of capacity 4 do fit 8 unit stages.
  snap.workers.push_back(mk_wv(1, "d1", Site::edge));
  PlacementDecision d2 = oracle_place(chain_template(8), "d1", snap, w);
  REQUIRE(d2.accepted);
  std::map<int, double> used;
  for (const auto& [sid, wid] : d2.assignment) used[wid] += 1.0;
  (void)used;
  for (const auto& [wid, u] : used) CHECK(u <= 4.0 + 1e-9);
}

TEST_CASE("oracle greedy stays within five percent of exhaustive on branching pipeline") {
  CostWeights w;
  PipelineTemplate t = build_template("ran-entangled");
  REQUIRE(classify_structure(t).cls == DagClass::general);
  TopologySnapshot snap;
  for (int i = 0; i < 4; ++i) snap.workers.push_back(mk_wv(i, "d1", Site::edge));
  PlacementDecision d = oracle_place(t, "d1", snap, w);
  REQUIRE(d.accepted);
  auto ref = exhaustive_min_cost(t, "d1", snap, w);  // 4^8 assignments
  REQUIRE(ref.has_value());
  CHECK(d.total_cost <= *ref * 1.05 + 1e-9);
  CHECK(d.total_cost >= *ref - 1e-9);
}

TEST_CASE("oracle offloads a whole pipeline when remote capacity is cheaper") {
  CostWeights w;
  TopologySnapshot snap;
  snap.workers = {mk_wv(0, "d1", Site::edge),
                  mk_wv(1, "d3", Site::cloud, 0.0, Slice::urllc, 8.0),
                  mk_wv(2, "d3", Site::cloud, 0.0, Slice::urllc, 8.0)};
  PipelineTemplate t = chain_template(2);
  // Stacked on the big cloud worker: 0 latency + 2/8 utilisation + 1 domain
  // beats the same stack at home (2/4 utilisation).
  PlacementDecision d = oracle_place(t, "d1", snap, w);
  REQUIRE(d.accepted);
  CHECK(d.assignment.at(0) == 1);
  CHECK(d.assignment.at(1) == 1);
  CHECK(d.total_cost == doctest::Approx(1.25));
  CHECK(d.domains_crossed == 1);

  // Pinning the first stage home makes the WAN hop dwarf the utilisation
  // gain, so the whole chain stays on the home worker.
  t.stages[0].sovereignty = Sovereignty::local_only;
  PlacementDecision d2 = oracle_place(t, "d1", snap, w);
  REQUIRE(d2.accepted);
  CHECK(d2.assignment.at(0) == 0);
  CHECK(d2.assignment.at(1) == 0);
  CHECK(d2.total_cost == doctest::Approx(0.5 + 1.0));
}

/* ==================================================================== */

TEST_CASE("sharded oracle on fresh snapshots equals the pooled oracle") {
  CostWeights w;
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    TopologySnapshot full;
    std::map<std::string, TopologySnapshot> per_domain;
    const std::vector<std::pair<std::string, Site>> doms = {
        {"d1", Site::edge}, {"d2", Site::edge}, {"d3", Site::cloud}};
    int id = 0;
    for (const auto& [dom, site] : doms)
      for (int i = 0; i < 3; ++i) {
        WorkerView wv = mk_wv(id++, dom, site, static_cast<double>(rng() % 4));
        full.workers.push_back(wv);
        per_domain[dom].workers.push_back(wv);
      }
    PipelineTemplate t = build_template(trial % 2 ? "cqi-chain" : "anomaly-sp");

    std::vector<TopologySnapshot> pulled;
    for (auto& [dom, snap] : per_domain) pulled.push_back(snap);
    PlacementDecision pooled = oracle_place(t, "d1", full, w);
    PlacementDecision sharded = sharded_oracle_place(t, "d1", pulled, w);
    REQUIRE(pooled.accepted == sharded.accepted);
    if (pooled.accepted) {
      CHECK(pooled.assignment == sharded.assignment);  // bitwise-equal plan
      CHECK(pooled.total_cost == doctest::Approx(sharded.total_cost));
    }
  }
}

TEST_CASE("sharded oracle excludes workers of a timed-out peer") {
  CostWeights w;
  // One cramped home worker, a cheap peer that timed out, a far peer that
  // answered. The plan must spill to the far peer, never the silent one.
  TopologySnapshot d1, d3;
  d1.workers = {mk_wv(0, "d1", Site::edge)};  // capacity 4 of 8 needed
  d3.workers = {mk_wv(20, "d3", Site::cloud), mk_wv(21, "d3", Site::cloud)};
  PipelineTemplate t = chain_template(8);
  PlacementDecision d = sharded_oracle_place(t, "d1", {d1, d3}, w);
  REQUIRE(d.accepted);
  std::set<int> used;
  for (const auto& [sid, wid] : d.assignment) used.insert(wid);
  (void)used;
  for (int wid : used) CHECK((wid == 0 || wid == 20 || wid == 21));
  CHECK(used.count(20) + used.count(21) >= 1);  // it had to spill
}

/* ==================================================================== */

TEST_CASE("round robin cycles through workers and persists the cursor") {
  TopologySnapshot snap;
  for (int i = 0; i < 3; ++i) snap.workers.push_back(mk_wv(i, "d1", Site::edge));
  int cursor = 0;
  PlacementDecision d = rr_place(chain_template(3), "d1", snap, cursor);
  REQUIRE(d.accepted);
  CHECK(d.assignment.at(0) == 0);
  CHECK(d.assignment.at(1) == 1);
  CHECK(d.assignment.at(2) == 2);
  CHECK(cursor == 0);  // wrapped around

  // Cursor persists across pipelines: the 4th stage overall lands on w0.
  PlacementDecision d2 = rr_place(chain_template(1), "d1", snap, cursor);
  REQUIRE(d2.accepted);
  CHECK(d2.assignment.at(0) == 0);
  CHECK(cursor == 1);
}

TEST_CASE("round robin distributes K*N stages exactly K per worker") {
  TopologySnapshot snap;
  const int n = 5, k = 4;
  for (int i = 0; i < n; ++i) snap.workers.push_back(mk_wv(i, "d1", Site::edge));
  int cursor = 0;
  std::map<int, int> hits;
  for (int p = 0; p < k; ++p) {
    PlacementDecision d = rr_place(chain_template(n), "d1", snap, cursor);
    REQUIRE(d.accepted);
    for (const auto& [sid, wid] : d.assignment) {
      (void)sid;
      hits[wid]++;
    }
  }
  REQUIRE(hits.size() == static_cast<size_t>(n));
  for (const auto& [wid, c] : hits) CHECK(c == k);
}

TEST_CASE("round robin skips slices and the dead but not the saturated") {
  TopologySnapshot snap;
  snap.workers = {mk_wv(0, "d1", Site::edge, 0, Slice::embb),
                  mk_wv(1, "d1", Site::edge, 99.0, Slice::urllc),
                  mk_wv(2, "d1", Site::edge, 0, Slice::urllc)};
  snap.workers[2].alive = false;
  snap.workers[1].suspect = true;  // rr ignores suspicion on purpose

  PipelineTemplate t = chain_template(2, Slice::urllc);
  int cursor = 0;
  PlacementDecision d = rr_place(t, "d1", snap, cursor);
  REQUIRE(d.accepted);
  // w0 is the wrong slice, w2 is dead; saturated suspect w1 takes both.
  CHECK(d.assignment.at(0) == 1);
  CHECK(d.assignment.at(1) == 1);

  // Nothing eligible at all: reject.
  PipelineTemplate pinned = chain_template(1, Slice::urllc);
  pinned.stages[0].sovereignty = Sovereignty::local_only;
  PlacementDecision d2 = rr_place(pinned, "d9", snap, cursor);
  CHECK_FALSE(d2.accepted);
  CHECK(d2.reject_reason == "no-feasible-worker");
}

/* ==================================================================== */

TEST_CASE("locality stacks the cheapest home workers and rejects when exhausted") {
  MarketConfig cfg;
  TopologySnapshot snap;
  for (int i = 0; i < 2; ++i) snap.workers.push_back(mk_wv(i, "d1", Site::edge));
  snap.workers.push_back(mk_wv(7, "d2", Site::edge));  // never eligible

  PlacementDecision d = locality_place(chain_template(8), "d1", snap, cfg);
  REQUIRE(d.accepted);
  for (const auto& [sid, wid] : d.assignment) {
    (void)sid;
    CHECK(wid != 7);
  }
  CHECK(d.domains_crossed == 1);
  // Cheapest-first with reservations: w0 gets 4 stages, then w1.
  CHECK(d.assignment.at(0) == 0);
  CHECK(d.assignment.at(3) == 0);
  CHECK(d.assignment.at(4) == 1);
  CHECK(d.assignment.at(7) == 1);

  PlacementDecision d2 = locality_place(chain_template(9), "d1", snap, cfg);
  CHECK_FALSE(d2.accepted);
  CHECK(d2.reject_reason == "locality-exhausted");
}

TEST_CASE("latency greedy hugs the origin and ignores load") {
  TopologySnapshot snap;
  snap.workers = {mk_wv(0, "d1", Site::edge, 3.9), mk_wv(1, "d2", Site::edge),
                  mk_wv(2, "d3", Site::cloud)};
  PlacementDecision d = latency_greedy_place(chain_template(6), "d1", snap);
  REQUIRE(d.accepted);
  // Load on w0 is irrelevant; zero incremental latency keeps every stage there.
  for (const auto& [sid, wid] : d.assignment) {
    (void)sid;
    CHECK(wid == 0);
  }
  CHECK(d.domains_crossed == 1);
}

TEST_CASE("latency greedy never crosses the WAN unless a constraint forces it") {
  TopologySnapshot snap;
  snap.workers = {mk_wv(0, "d1", Site::edge), mk_wv(1, "d2", Site::edge),
                  mk_wv(2, "d3", Site::cloud), mk_wv(3, "d4", Site::cloud)};
  for (const auto& kind : builtin_template_kinds()) {
    PipelineTemplate t = build_template(kind);
    PlacementDecision d = latency_greedy_place(t, "d1", snap);
    REQUIRE(d.accepted);
    for (const auto& [sid, wid] : d.assignment) {
      (void)sid;
      CHECK(snap.find(wid)->spec.site == Site::edge);
    }
  }
}

TEST_CASE("spillover fills the origin then the nearest peer") {
  TopologySnapshot snap;
  snap.workers = {mk_wv(0, "d1", Site::edge, 4.0),   // origin, full
                  mk_wv(1, "d1", Site::edge, 4.0),   // origin, full
                  mk_wv(10, "d2", Site::edge),       // LAN peer, idle
                  mk_wv(20, "d3", Site::cloud)};     // WAN peer, idle
  PlacementDecision d = spillover_place(chain_template(4), "d1", snap);
  REQUIRE(d.accepted);
  for (const auto& [sid, wid] : d.assignment) {
    (void)sid;
    CHECK(wid == 10);  // nearest peer takes everything
  }

  // Partially full origin: first free home units, then the LAN peer.
  snap.workers[0].load = 3.0;
  PlacementDecision d2 = spillover_place(chain_template(4), "d1", snap);
  REQUIRE(d2.accepted);
  CHECK(d2.assignment.at(0) == 0);
  CHECK(d2.assignment.at(1) == 10);
  CHECK(d2.assignment.at(2) == 10);
  CHECK(d2.assignment.at(3) == 10);

  // Everything everywhere exhausted: reject.
  snap.workers[0].load = 4.0;
  snap.workers[2].load = 4.0;
  snap.workers[3].load = 4.0;
  PlacementDecision d3 = spillover_place(chain_template(1), "d1", snap);
  CHECK_FALSE(d3.accepted);
  CHECK(d3.reject_reason == "spillover-exhausted");
}

/* ==================================================================== */

TEST_CASE("market placement matches the oracle on an idle uniform domain") {
  MarketConfig cfg;
  CostWeights w;
  TopologySnapshot snap;
  for (int i = 0; i < 12; ++i) snap.workers.push_back(mk_wv(i, "d1", Site::edge));

  for (const auto& kind : builtin_template_kinds()) {
    PipelineTemplate t = build_template(kind);
    PlacementDecision oracle = oracle_place(t, "d1", snap, w);
    PlacementResult market = market_place(t, "d1", snap.workers, {}, cfg);
    REQUIRE(oracle.accepted);
    REQUIRE(market.accepted);

    std::map<int, int> masg;
    for (const auto& sp : market.stages) masg[sp.stage_id] = sp.worker_id;
    // The oracle never loses to the market on the cost function, and for a
    // chain the two reduce to the same cheapest-feasible stacking.
    CHECK(oracle.total_cost <= placement_cost(masg, t, snap, w) + 1e-9);
    if (kind == "cqi-chain") {
      CHECK(masg == oracle.assignment);
      CHECK(placement_cost(masg, t, snap, w) == doctest::Approx(oracle.total_cost));
    }
  }
}

TEST_CASE("every strategy honours slice and residency filters") {
  MarketConfig cfg;
  CostWeights w;
  std::mt19937_64 rng(2025);
  for (int trial = 0; trial < 25; ++trial) {
    TopologySnapshot snap;
    const std::vector<std::pair<std::string, Site>> doms = {
        {"d1", Site::edge}, {"d2", Site::edge}, {"d3", Site::cloud}};
    int id = 0;
    for (const auto& [dom, site] : doms)
      for (int i = 0; i < 4; ++i) {
        Slice tier = static_cast<Slice>(rng() % 3);
        snap.workers.push_back(mk_wv(id++, dom, site,
                                     static_cast<double>(rng() % 3), tier));
      }

    PipelineTemplate t = chain_template(3, Slice::urllc);
    t.stages[1].slice = Slice::embb;
    t.stages[2].sovereignty = Sovereignty::local_only;
    int cursor = static_cast<int>(rng() % 12);

    std::vector<PlacementDecision> decisions = {
        oracle_place(t, "d1", snap, w),
        sharded_oracle_place(t, "d1", {snap}, w),
        rr_place(t, "d1", snap, cursor),
        locality_place(t, "d1", snap, cfg),
        latency_greedy_place(t, "d1", snap),
        spillover_place(t, "d1", snap),
    };
    for (const auto& d : decisions) {
      if (!d.accepted) continue;
      for (const auto& [sid, wid] : d.assignment) {
        const StageSpec& s = t.stage(sid);
        const WorkerView* wv = snap.find(wid);
        REQUIRE(wv != nullptr);
        CHECK(slice_compatible(wv->spec.tier, s.slice));
        if (s.sovereignty == Sovereignty::local_only)
          CHECK(wv->spec.domain == "d1");
      }
    }
  }
}
