/**
 * @file test_config.cpp
 * @brief Scenario-file grammar: schema gating, strict unknown-key
 *        rejection, value plumbing into the engine config, failure
 *        scripts, and custom template definitions.
 */
#include <string>

#include "doctest.h"
#include "fedmarket/config.hpp"
#include "fedmarket/errors.hpp"

using namespace fedmarket;

namespace {
const char* full_scenario = R"(# campaign cell: market under partition
schema_version = 1

[run]
strategy = oracle-sharded
pipeline = anomaly-sp
lambda_pps = 7.5
duration_s = 300
warmup_s = 60
governance = B
seeds = 3, 4, 5
out_dir = results/partition

[latency]
lan_ms = 0.25
wan_ms = 40
wan_jitter_ms = 2

[market]
base_bid = 12
rho_max = 0.95
wan_penalty_ms = 25

[federation]
delta_prop_s = 8
delta_health_s = 4
tau_fed_s = 3
k_miss = 2
wan_max_ms = 45
recovery_probe_every = 4

[weights]
alpha = 2
beta = 0.5
zeta = 1.5

[engine]
base_service_ms = 180
broker_decision_ms = 1.5
max_stage_attempts = 3

[failures]
event = 120 worker-kill 7
event = 150 partition-start
event = 270 partition-end
)";
}  // namespace

TEST_CASE("a full scenario file lands in every engine knob") {
  ScenarioConfig sc = parse_scenario_text(full_scenario);

  CHECK(sc.base.strategy == "oracle-sharded");
  CHECK(sc.base.workload.pipeline_kind == "anomaly-sp");
  CHECK(sc.base.workload.lambda_pps == 7.5);
  CHECK(sc.base.workload.duration_s == 300.0);
  CHECK(sc.base.workload.warmup_s == 60.0);
  CHECK(sc.base.governance == GovernanceScenario::B);
  CHECK(sc.seeds == std::vector<std::uint64_t>{3, 4, 5});
  CHECK(sc.out_dir == "results/partition");

  CHECK(sc.base.latency.lan_ms == 0.25);
  CHECK(sc.base.latency.wan_ms == 40.0);
  CHECK(sc.base.latency.wan_jitter_ms == 2.0);

  CHECK(sc.base.market.base_bid == 12.0);
  CHECK(sc.base.market.rho_max == 0.95);
  CHECK(sc.base.market.wan_penalty_ms == 25.0);

  CHECK(sc.base.federation.delta_prop_s == 8.0);
  CHECK(sc.base.federation.delta_health_s == 4.0);
  CHECK(sc.base.federation.tau_fed_s == 3.0);
  CHECK(sc.base.federation.k_miss == 2);
  CHECK(sc.base.federation.wan_max_ms == 45.0);
  CHECK(sc.base.federation.recovery_probe_every == 4);

  CHECK(sc.base.weights.alpha == 2.0);
  CHECK(sc.base.weights.beta == 0.5);
  CHECK(sc.base.weights.zeta == 1.5);

  CHECK(sc.base.base_service_ms == 180.0);
  CHECK(sc.base.broker_decision_ms == 1.5);
  CHECK(sc.base.max_stage_attempts == 3);

  REQUIRE(sc.base.failures.events.size() == 3);
  CHECK(sc.base.failures.events[0].time_s == 120.0);
  CHECK(sc.base.failures.events[0].kind == FailureKind::worker_kill);
  CHECK(sc.base.failures.events[0].target == "7");
  CHECK(sc.base.failures.events[1].kind == FailureKind::partition_start);
  CHECK(sc.base.failures.events[2].kind == FailureKind::partition_end);
}

TEST_CASE("defaults survive an empty-but-versioned scenario") {
  ScenarioConfig sc = parse_scenario_text("schema_version = 1\n");
  CHECK(sc.base.strategy == "market");
  CHECK(sc.base.workload.lambda_pps == 5.0);
  CHECK(sc.seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
  CHECK(sc.out_dir == "out");
}

TEST_CASE("schema version is mandatory, first, and exactly 1") {
  CHECK_THROWS_AS(parse_scenario_text(""), ConfigError);
  CHECK_THROWS_AS(parse_scenario_text("[run]\nstrategy = market\n"), ConfigError);
  CHECK_THROWS_AS(parse_scenario_text("schema_version = 2\n"), ConfigError);
  CHECK_THROWS_AS(
      parse_scenario_text("[run]\nschema_version = 1\n"), ConfigError);
}

TEST_CASE("unknown sections and keys are rejected, with names") {
  CHECK_THROWS_WITH_AS(
      parse_scenario_text("schema_version = 1\n[workloads]\n"),
      doctest::Contains("workloads"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_scenario_text("schema_version = 1\n[run]\nstrat = market\n"),
      doctest::Contains("strat"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_scenario_text("schema_version = 1\nlambda_pps = 5\n"),
      doctest::Contains("lambda_pps"), ConfigError);  // key outside a section
}

TEST_CASE("malformed values are rejected before any run") {
  auto bad = [](const std::string& body) {
    return std::string("schema_version = 1\n") + body;
  };
  CHECK_THROWS_AS(parse_scenario_text(bad("[run]\nlambda_pps = fast\n")), ConfigError);
  CHECK_THROWS_AS(parse_scenario_text(bad("[run]\nlambda_pps = 5x\n")), ConfigError);
  CHECK_THROWS_AS(parse_scenario_text(bad("[run]\nseeds = 1,,2\n")), ConfigError);
  CHECK_THROWS_AS(parse_scenario_text(bad("[run]\nseeds = \n")), ConfigError);
  CHECK_THROWS_AS(parse_scenario_text(bad("[run]\ngovernance = E\n")), ConfigError);
  CHECK_THROWS_AS(parse_scenario_text(bad("[failures]\nevent = soon worker-kill 7\n")),
                  ConfigError);
  CHECK_THROWS_AS(parse_scenario_text(bad("[failures]\nevent = 10 vaporize 7\n")),
                  ConfigError);
  CHECK_THROWS_AS(parse_scenario_text(bad("[run]\nstrategy\n")), ConfigError);
}

TEST_CASE("comments, blank lines, and spacing are tolerated") {
  ScenarioConfig sc = parse_scenario_text(
      "; leading comment\n"
      "schema_version = 1\n"
      "\n"
      "[run]   \n"
      "  strategy=rr-global\n"
      "# mid comment\n"
      "  lambda_pps   =   2\n");
  CHECK(sc.base.strategy == "rr-global");
  CHECK(sc.base.workload.lambda_pps == 2.0);
}

TEST_CASE("custom templates parse, validate, and reach the engine config") {
  ScenarioConfig sc = parse_scenario_text(
      "schema_version = 1\n"
      "[template]\n"
      "name = probe-pair\n"
      "value_budget = 400\n"
      "stage = 0 ingest embb free\n"
      "stage = 1 publish best_effort local_only 2.0\n"
      "edge = 0 1\n");
  REQUIRE(sc.base.custom_template.has_value());
  const PipelineTemplate& t = *sc.base.custom_template;
  CHECK(t.kind == "probe-pair");
  CHECK(t.value_budget == 400.0);
  REQUIRE(t.stages.size() == 2);
  CHECK(t.stages[1].stage_type == "publish");
  CHECK(t.stages[1].slice == Slice::best_effort);
  CHECK(t.stages[1].sovereignty == Sovereignty::local_only);
  CHECK(t.stages[1].demand == 2.0);
  REQUIRE(t.edges.size() == 1);
  CHECK(sc.base.workload.pipeline_kind == "probe-pair");

  // Structural validation runs at parse time: a cycle cannot load.
  CHECK_THROWS_AS(parse_scenario_text("schema_version = 1\n"
                                      "[template]\n"
                                      "name = loop\n"
                                      "value_budget = 100\n"
                                      "stage = 0 a embb free\n"
                                      "stage = 1 b embb free\n"
                                      "edge = 0 1\n"
                                      "edge = 1 0\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_scenario_text("schema_version = 1\n"
                                      "[template]\n"
                                      "stage = 0 a embb free\n"),
                  ConfigError);  // template requires a name
}

TEST_CASE("loading a missing scenario file names the path") {
  CHECK_THROWS_WITH_AS(load_scenario_file("/nonexistent/cell.cfg"),
                       doctest::Contains("/nonexistent/cell.cfg"), ConfigError);
}
