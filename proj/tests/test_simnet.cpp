/**
 * @file test_simnet.cpp
 * @brief Topology checks, workload and link models, exact idle-latency
 *        oracles, failure-injection behaviour, saturation shape, and
 *        bit-for-bit determinism of the event engine.
 */

#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "fedmarket/errors.hpp"
#include "fedmarket/simnet.hpp"

using namespace fedmarket;

namespace {

// One embb stage, no edges; placeable on any urllc/embb worker.
PipelineTemplate single_stage(const std::string& home) {
  PipelineTemplate t;
  t.kind = "single";
  t.value_budget = 800.0;
  StageSpec s;
  s.stage_id = 0;
  s.stage_type = "only";
  s.slice = Slice::embb;
  s.sovereignty = Sovereignty::free;
  s.home_domain = home;
  t.stages.push_back(s);
  return t;
}

DomainSpec tiny_domain(const std::string& id, int first_worker, int n,
                       Slice tier = Slice::embb, Site site = Site::edge) {
  DomainSpec d;
  d.domain_id = id;
  d.site = site;
  d.role = "test";
  for (int k = 0; k < n; ++k) {
    WorkerSpec w;
    w.worker_id = first_worker + k;
    w.domain = id;
    w.site = site;
    w.tier = tier;
    w.capacity = 4.0;
    w.speed = 1.0;
    d.workers.push_back(w);
  }
  return d;
}

double completion_ratio(const RunRecord& r) {
  return r.arrived == 0 ? 0.0
                        : static_cast<double>(r.completed) /
                              static_cast<double>(r.arrived);
}

}  // namespace

/* ==================================================================== */
/* Topology and models                                                   */
/* ==================================================================== */

TEST_CASE("default topology: four domains, 48 workers, tiers and sites") {
  auto topo = default_topology();
  REQUIRE(topo.size() == 4);
  CHECK(topo[0].domain_id == "d1");
  CHECK(topo[1].domain_id == "d2");
  CHECK(topo[2].domain_id == "d3");
  CHECK(topo[3].domain_id == "d4");
  CHECK(topo[0].site == Site::edge);
  CHECK(topo[1].site == Site::edge);
  CHECK(topo[2].site == Site::cloud);
  CHECK(topo[3].site == Site::cloud);

  std::set<int> ids;
  for (const auto& d : topo) {
    REQUIRE(d.workers.size() == 12);
    for (const auto& w : d.workers) {
      ids.insert(w.worker_id);
      CHECK(w.domain == d.domain_id);
      CHECK(w.site == d.site);
      CHECK(w.capacity == doctest::Approx(4.0));
      CHECK(w.speed == doctest::Approx(1.0));
    }
  }
  CHECK(ids.size() == 48);
  CHECK(*ids.begin() == 0);
  CHECK(*ids.rbegin() == 47);

  for (const auto& w : topo[0].workers) CHECK(w.tier == Slice::urllc);
  for (int k = 0; k < 6; ++k) CHECK(topo[1].workers[k].tier == Slice::urllc);
  for (int k = 6; k < 12; ++k) CHECK(topo[1].workers[k].tier == Slice::embb);
  for (const auto& w : topo[2].workers) CHECK(w.tier == Slice::embb);
  for (const auto& w : topo[3].workers) CHECK(w.tier == Slice::best_effort);
}

TEST_CASE("poisson arrivals: rate, determinism, ordering") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto a = poisson_arrivals(5.0, 600.0, rng);
    CHECK(a.size() >= 2700);
    CHECK(a.size() <= 3300);
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(a.back() < 600.0);
  }
  std::mt19937_64 r1(42), r2(42), r3(43);
  auto x = poisson_arrivals(2.0, 100.0, r1);
  auto y = poisson_arrivals(2.0, 100.0, r2);
  auto z = poisson_arrivals(2.0, 100.0, r3);
  CHECK(x == y);
  CHECK(x != z);
  CHECK_THROWS_AS(poisson_arrivals(0.0, 10.0, r1), ConfigError);
}

TEST_CASE("link latency: same worker, same site, cross site") {
  auto topo = default_topology();
  const WorkerSpec& d1w = topo[0].workers[0];
  const WorkerSpec& d1w2 = topo[0].workers[1];
  const WorkerSpec& d2w = topo[1].workers[0];
  const WorkerSpec& d3w = topo[2].workers[0];
  LatencyModel m;
  std::mt19937_64 rng(7);

  CHECK(sample_link_latency(d1w, d1w, m, rng) == doctest::Approx(0.0));
  CHECK(sample_link_latency(d1w, d1w2, m, rng) == doctest::Approx(0.5));
  CHECK(sample_link_latency(d1w, d2w, m, rng) == doctest::Approx(0.5));
  for (int k = 0; k < 200; ++k) {
    double l = sample_link_latency(d1w, d3w, m, rng);
    CHECK(l >= 45.0);
    CHECK(l <= 55.0);
  }
  LatencyModel flat;
  flat.wan_jitter_ms = 0.0;
  CHECK(sample_link_latency(d1w, d3w, flat, rng) == doctest::Approx(50.0));
}

TEST_CASE("failure kind names round-trip") {
  for (FailureKind k :
       {FailureKind::worker_kill, FailureKind::broker_kill,
        FailureKind::partition_start, FailureKind::partition_end,
        FailureKind::heterogeneity_profile})
    CHECK(failure_kind_from_name(to_string(k)) == k);
  CHECK_THROWS_AS(failure_kind_from_name("meteor"), ConfigError);
}

TEST_CASE("config validation rejects malformed runs before any event") {
  SimConfig cfg;
  cfg.strategy = "psychic";
  CHECK_THROWS_AS(run_sim(cfg), ConfigError);

  SimConfig cfg2;
  cfg2.workload.warmup_s = 900.0;  // past the end
  CHECK_THROWS_AS(run_sim(cfg2), ConfigError);

  SimConfig cfg3;
  cfg3.workload.pipeline_kind = "no-such-kind";
  CHECK_THROWS(run_sim(cfg3));

  SimConfig cfg4;
  cfg4.failures.events.push_back({100.0, FailureKind::broker_kill, "w7"});
  CHECK_THROWS_AS(run_sim(cfg4), ConfigError);

  SimConfig cfg5;
  cfg5.failures.events.push_back({100.0, FailureKind::worker_kill, "banana"});
  CHECK_THROWS_AS(run_sim(cfg5), ConfigError);
}

/* ==================================================================== */
/* Exact latency oracles                                                 */
/* ==================================================================== */

TEST_CASE("idle single stage: latency is exactly service plus slice delay") {
  SimConfig cfg;
  cfg.strategy = "market";
  cfg.topology.push_back(tiny_domain("dx", 0, 1));
  cfg.custom_template = single_stage("dx");
  cfg.workload.lambda_pps = 0.02;
  cfg.workload.duration_s = 600.0;
  cfg.workload.warmup_s = 0.0;
  cfg.workload.seed = 3;

  RunRecord r = run_sim(cfg);
  REQUIRE(r.arrived >= 5);
  CHECK(r.completed == r.arrived);
  for (const auto& row : r.rows) {
    REQUIRE(row.completed);
    // 220 ms base service + 5 ms embb slice delay, no links, no queue.
    CHECK(row.e2e_ms == 225.0);
    CHECK(row.domains_crossed == 1);
    CHECK(row.reject_reason.empty());
  }
}

TEST_CASE("idle chain stacks within capacity and hits the exact path time") {
  SimConfig cfg;
  cfg.strategy = "market";
  cfg.topology.push_back(tiny_domain("d1", 0, 2));
  cfg.workload.pipeline_kind = "cqi-chain";
  cfg.workload.lambda_pps = 0.02;
  cfg.workload.duration_s = 400.0;
  cfg.workload.warmup_s = 0.0;
  cfg.workload.seed = 5;

  RunRecord r = run_sim(cfg);
  REQUIRE(r.arrived >= 3);
  CHECK(r.completed == r.arrived);
  for (const auto& row : r.rows) {
    // Four 225 ms stages on worker 0, a 0.5 ms hop, then three 225 ms
    // stages and the 220 ms best-effort sink on worker 1.
    CHECK(row.e2e_ms == doctest::Approx(1795.5).epsilon(1e-12));
    CHECK(row.domains_crossed == 1);
  }
}

TEST_CASE("idle chain across sites pays wide-area hops") {
  SimConfig cfg;
  cfg.strategy = "market";
  cfg.latency.wan_jitter_ms = 0.0;  // pin links for an exact bound
  cfg.workload.pipeline_kind = "cqi-chain";
  cfg.workload.lambda_pps = 0.02;
  cfg.workload.duration_s = 400.0;
  cfg.workload.warmup_s = 0.0;
  cfg.workload.seed = 5;

  RunRecord r = run_sim(cfg);
  REQUIRE(r.arrived >= 3);
  CHECK(r.completed == r.arrived);
  for (const auto& row : r.rows)
    // Never faster than the zero-link critical path.
    CHECK(row.e2e_ms >= 7 * 225.0 + 220.0);
}

/* ==================================================================== */
/* Failure injection                                                     */
/* ==================================================================== */

TEST_CASE("worker kill mid-run: stages re-place and pipelines still finish") {
  SimConfig cfg;
  cfg.strategy = "market";
  cfg.topology.push_back(tiny_domain("dx", 0, 2));
  cfg.custom_template = single_stage("dx");
  cfg.workload.lambda_pps = 1.0;
  cfg.workload.duration_s = 60.0;
  cfg.workload.warmup_s = 0.0;
  cfg.workload.seed = 11;
  cfg.failures.events.push_back({20.0, FailureKind::worker_kill, "0"});

  RunRecord r = run_sim(cfg);
  REQUIRE(r.arrived >= 40);
  CHECK(r.failed == 0);
  CHECK(r.completed >= r.arrived - 1);  // at most the tail arrival in flight
}

TEST_CASE("domain-wide worker kill: the dead domain rejects, others serve") {
  SimConfig cfg;
  cfg.strategy = "market";
  cfg.workload.pipeline_kind = "cqi-chain";
  cfg.workload.lambda_pps = 4.0;
  cfg.workload.duration_s = 240.0;
  cfg.workload.warmup_s = 60.0;
  cfg.workload.seed = 2;
  cfg.failures.events.push_back({120.0, FailureKind::worker_kill, "d3"});

  RunRecord r = run_sim(cfg);
  REQUIRE(r.arrived > 400);
  long other_total = 0, other_done = 0;
  for (const auto& row : r.rows) {
    if (row.origin_domain == "d3") {
      // The report sink is pinned to its origin domain; with every local
      // worker dead, admission must refuse rather than misplace it.
      if (row.arrival_s > 121.0) CHECK_FALSE(row.accepted);
    } else {
      other_total += 1;
      if (row.completed) other_done += 1;
    }
  }
  REQUIRE(other_total > 300);
  CHECK(static_cast<double>(other_done) / static_cast<double>(other_total) >
        0.95);
}

TEST_CASE("broker kill: owned in-flight work fails, arrivals re-home") {
  SimConfig cfg;
  cfg.strategy = "market";
  cfg.workload.pipeline_kind = "cqi-chain";
  cfg.workload.lambda_pps = 2.0;
  cfg.workload.duration_s = 300.0;
  cfg.workload.warmup_s = 0.0;
  cfg.workload.seed = 4;
  cfg.failures.events.push_back({100.0, FailureKind::broker_kill, "d2"});

  RunRecord r = run_sim(cfg);
  CHECK(r.accepted == r.completed + r.failed + r.in_flight);
  bool saw_rehomed = false;
  for (const auto& row : r.rows) {
    if (row.arrival_s > 100.0) {
      CHECK(row.origin_domain != "d2");
      if (row.origin_domain == "d1") saw_rehomed = true;
    }
  }
  CHECK(saw_rehomed);
  CHECK(completion_ratio(r) > 0.85);
}

TEST_CASE("partition: no result crosses the cut, service continues locally") {
  SimConfig cfg;
  cfg.strategy = "market";
  cfg.workload.pipeline_kind = "cqi-chain";
  cfg.workload.lambda_pps = 4.0;
  cfg.workload.duration_s = 600.0;
  cfg.workload.warmup_s = 240.0;
  cfg.workload.seed = 1;
  cfg.failures.events.push_back({300.0, FailureKind::partition_start, ""});
  cfg.failures.events.push_back({420.0, FailureKind::partition_end, ""});

  RunRecord r = run_sim(cfg);
  CHECK(r.cross_site_completions_in_partition == 0);
  CHECK(completion_ratio(r) > 0.9);

  // Cloud-origin pipelines keep completing by trading within their site:
  // their worker pool cannot run analysis stages, so acceptance always
  // spans at least two domains.
  long d4_total = 0, d4_done = 0;
  for (const auto& row : r.rows) {
    if (row.origin_domain != "d4") continue;
    d4_total += 1;
    if (row.completed) d4_done += 1;
    if (row.accepted) CHECK(row.domains_crossed >= 2);
  }
  REQUIRE(d4_total > 100);
  CHECK(static_cast<double>(d4_done) / static_cast<double>(d4_total) > 0.8);
}

TEST_CASE("heterogeneity profile: market routes around the slow edge") {
  auto mean_e2e = [](const RunRecord& r) {
    double sum = 0.0;
    long n = 0;
    for (const auto& row : r.rows)
      if (row.completed) {
        sum += row.e2e_ms;
        n += 1;
      }
    REQUIRE(n > 0);
    return sum / static_cast<double>(n);
  };

  SimConfig cfg;
  cfg.workload.pipeline_kind = "cqi-chain";
  cfg.workload.lambda_pps = 10.0;
  cfg.workload.duration_s = 300.0;
  cfg.workload.warmup_s = 60.0;
  cfg.workload.seed = 1;
  cfg.failures.events.push_back(
      {0.0, FailureKind::heterogeneity_profile, ""});

  cfg.strategy = "market";
  double market_mean = mean_e2e(run_sim(cfg));
  cfg.strategy = "rr-global";
  double rr_mean = mean_e2e(run_sim(cfg));

  CHECK(market_mean < 0.9 * rr_mean);
}

/* ==================================================================== */
/* Saturation shape                                                      */
/* ==================================================================== */

TEST_CASE("round-robin dispatch collapses past the knee; market does not") {
  auto run_at = [](const std::string& strategy, double lambda) {
    SimConfig cfg;
    cfg.strategy = strategy;
    cfg.workload.pipeline_kind = "cqi-chain";
    cfg.workload.lambda_pps = lambda;
    // Long warmup: the blind dispatcher's collapse is backlog accumulating
    // ahead of the measured window, so give the backlog time to mature.
    cfg.workload.duration_s = 180.0;
    cfg.workload.warmup_s = 120.0;
    cfg.workload.seed = 1;
    return completion_ratio(run_sim(cfg));
  };

  double rr_low = run_at("rr-global", 8.0);
  double rr_high = run_at("rr-global", 30.0);
  double market_high = run_at("market", 30.0);

  CHECK(rr_low > 0.9);
  CHECK(rr_high < 0.3);
  CHECK(market_high > rr_high + 0.3);
}

/* ==================================================================== */
/* Conservation and determinism                                          */
/* ==================================================================== */

TEST_CASE("window accounting is conserved across strategies") {
  for (const char* strategy :
       {"market", "oracle", "oracle-sharded", "rr-global", "locality",
        "latency-greedy", "spillover"}) {
    SimConfig cfg;
    cfg.strategy = strategy;
    cfg.workload.pipeline_kind = "anomaly-sp";
    cfg.workload.lambda_pps = 3.0;
    cfg.workload.duration_s = 180.0;
    cfg.workload.warmup_s = 60.0;
    cfg.workload.seed = 6;

    RunRecord r = run_sim(cfg);
    INFO("strategy ", strategy);
    CHECK(r.arrived == static_cast<long>(r.rows.size()));
    CHECK(r.accepted == r.completed + r.failed + r.in_flight);
    CHECK(r.completed > 0);
    for (const auto& row : r.rows) {
      if (row.completed) {
        CHECK(row.accepted);
        CHECK(row.e2e_ms > 0.0);
      }
      if (!row.accepted) CHECK_FALSE(row.reject_reason.empty());
    }
  }
}

TEST_CASE("completed latency never beats the critical path") {
  for (const char* strategy : {"market", "rr-global", "latency-greedy"}) {
    SimConfig cfg;
    cfg.strategy = strategy;
    cfg.workload.pipeline_kind = "cqi-chain";
    cfg.workload.lambda_pps = 2.0;
    cfg.workload.duration_s = 180.0;
    cfg.workload.warmup_s = 30.0;
    cfg.workload.seed = 9;
    RunRecord r = run_sim(cfg);
    for (const auto& row : r.rows)
      if (row.completed) CHECK(row.e2e_ms >= 7 * 225.0 + 220.0);
  }
}

TEST_CASE("identical config and seed reproduce identical records") {
  SimConfig cfg;
  cfg.strategy = "market";
  cfg.workload.pipeline_kind = "ran-entangled";
  cfg.workload.lambda_pps = 5.0;
  cfg.workload.duration_s = 120.0;
  cfg.workload.warmup_s = 30.0;
  cfg.workload.seed = 21;

  RunRecord a = run_sim(cfg);
  RunRecord b = run_sim(cfg);
  REQUIRE(a.rows.size() == b.rows.size());
  CHECK(a.completed == b.completed);
  CHECK(a.failed == b.failed);
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].pipeline_id == b.rows[i].pipeline_id);
    CHECK(a.rows[i].arrival_s == b.rows[i].arrival_s);   // bit-exact
    CHECK(a.rows[i].e2e_ms == b.rows[i].e2e_ms);         // bit-exact
    CHECK(a.rows[i].origin_domain == b.rows[i].origin_domain);
    CHECK(a.rows[i].completed == b.rows[i].completed);
    CHECK(a.rows[i].placement_cost == b.rows[i].placement_cost);
    CHECK(a.rows[i].domains_crossed == b.rows[i].domains_crossed);
  }

  cfg.workload.seed = 22;
  RunRecord c = run_sim(cfg);
  bool differs = c.rows.size() != a.rows.size();
  for (size_t i = 0; !differs && i < a.rows.size(); ++i)
    differs = a.rows[i].arrival_s != c.rows[i].arrival_s;
  CHECK(differs);
}

TEST_CASE("per-pipeline rows carry plan provenance") {
  SimConfig cfg;
  cfg.strategy = "market";
  cfg.workload.pipeline_kind = "cqi-chain";
  cfg.workload.lambda_pps = 2.0;
  cfg.workload.duration_s = 180.0;
  cfg.workload.warmup_s = 30.0;
  cfg.workload.seed = 13;
  RunRecord r = run_sim(cfg);
  REQUIRE(r.arrived > 100);
  CHECK(r.strategy == "market");
  CHECK(r.pipeline_kind == "cqi-chain");
  CHECK(r.lambda_pps == doctest::Approx(2.0));
  CHECK(r.seed == 13);
  for (const auto& row : r.rows)
    if (row.accepted) {
      CHECK(row.placement_cost > 0.0);
      CHECK(row.domains_crossed >= 1);
      CHECK(row.domains_crossed <= 4);
    }
}
