/**
 * @file config.cpp
 * @brief Scenario-file parser: sectioned key = value text with a
 *        mandatory schema version and strict unknown-key rejection.
 */
#include "fedmarket/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fedmarket/dag.hpp"
#include "fedmarket/errors.hpp"
#include "fedmarket/federation.hpp"

namespace fedmarket {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bail(int line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& v, int line) {
  const char* s = v.c_str();
  char* end = nullptr;
  double x = std::strtod(s, &end);
  if (end == s || *end != '\0')
    bail(line, "expected a number, got '" + v + "'");
  return x;
}

int parse_int(const std::string& v, int line) {
  const char* s = v.c_str();
  char* end = nullptr;
  long x = std::strtol(s, &end, 10);
  if (end == s || *end != '\0')
    bail(line, "expected an integer, got '" + v + "'");
  return static_cast<int>(x);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& v, int line) {
  std::vector<std::uint64_t> seeds;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) bail(line, "empty entry in seed list '" + v + "'");
    const char* s = item.c_str();
    char* end = nullptr;
    unsigned long long x = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0')
      bail(line, "seed '" + item + "' is not a non-negative integer");
    seeds.push_back(x);
  }
  if (seeds.empty()) bail(line, "seed list is empty");
  return seeds;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

/* One repeatable `event = <time_s> <kind> [target]` line. */
FailureEvent parse_failure_event(const std::string& v, int line) {
  auto parts = split_ws(v);
  if (parts.size() < 2 || parts.size() > 3)
    bail(line, "event wants '<time_s> <kind> [target]', got '" + v + "'");
  FailureEvent ev;
  ev.time_s = parse_double(parts[0], line);
  try {
    ev.kind = failure_kind_from_name(parts[1]);
  } catch (const ConfigError& e) {
    bail(line, e.what());
  }
  if (parts.size() == 3) ev.target = parts[2];
  return ev;
}

/* One `stage = <id> <type> <slice> <free|local_only> [demand] [home]`. */
StageSpec parse_stage(const std::string& v, int line) {
  auto parts = split_ws(v);
  if (parts.size() < 4 || parts.size() > 6)
    bail(line, "stage wants '<id> <type> <slice> <free|local_only> [demand] [home_domain]'");
  StageSpec s;
  s.stage_id = parse_int(parts[0], line);
  s.stage_type = parts[1];
  try {
    s.slice = slice_from_string(parts[2]);
  } catch (const ConfigError& e) {
    bail(line, e.what());
  }
  if (parts[3] == "free")
    s.sovereignty = Sovereignty::free;
  else if (parts[3] == "local_only")
    s.sovereignty = Sovereignty::local_only;
  else
    bail(line, "sovereignty must be 'free' or 'local_only', got '" + parts[3] + "'");
  if (parts.size() >= 5) s.demand = parse_double(parts[4], line);
  if (parts.size() == 6) s.home_domain = parts[5];
  return s;
}

}  // namespace

ScenarioConfig parse_scenario_text(const std::string& text) {
  ScenarioConfig sc;
  PipelineTemplate custom;
  bool has_template = false;
  bool versioned = false;
  std::string section;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    line_no += 1;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;

    if (line.front() == '[') {
      if (line.back() != ']') bail(line_no, "unterminated section header");
      if (!versioned) bail(line_no, "schema_version = 1 must come first");
      section = trim(line.substr(1, line.size() - 2));
      static const char* known[] = {"run",     "latency", "market",
                                    "federation", "weights", "engine",
                                    "failures", "template"};
      bool ok = false;
      for (const char* k : known) ok = ok || section == k;
      if (!ok) bail(line_no, "unknown section [" + section + "]");
      continue;
    }

    size_t eq = line.find('=');
    if (eq == std::string::npos) bail(line_no, "expected key = value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty()) bail(line_no, "missing key before '='");

    if (!versioned) {
      if (key != "schema_version")
        bail(line_no, "schema_version = 1 must come first, found '" + key + "'");
      if (val != "1") bail(line_no, "unsupported schema_version '" + val + "'");
      versioned = true;
      continue;
    }
    if (section.empty()) bail(line_no, "key '" + key + "' appears outside any section");

    SimConfig& b = sc.base;
    if (section == "run") {
      if (key == "strategy") b.strategy = val;
      else if (key == "pipeline") b.workload.pipeline_kind = val;
      else if (key == "lambda_pps") b.workload.lambda_pps = parse_double(val, line_no);
      else if (key == "duration_s") b.workload.duration_s = parse_double(val, line_no);
      else if (key == "warmup_s") b.workload.warmup_s = parse_double(val, line_no);
      else if (key == "governance") {
        try {
          b.governance = governance_scenario_from_name(val);
        } catch (const ConfigError& e) {
          bail(line_no, e.what());
        }
      } else if (key == "seeds") sc.seeds = parse_seed_list(val, line_no);
      else if (key == "out_dir") sc.out_dir = val;
      else bail(line_no, "unknown key '" + key + "' in [run]");
    } else if (section == "latency") {
      if (key == "lan_ms") b.latency.lan_ms = parse_double(val, line_no);
      else if (key == "wan_ms") b.latency.wan_ms = parse_double(val, line_no);
      else if (key == "wan_jitter_ms") b.latency.wan_jitter_ms = parse_double(val, line_no);
      else bail(line_no, "unknown key '" + key + "' in [latency]");
    } else if (section == "market") {
      if (key == "base_bid") b.market.base_bid = parse_double(val, line_no);
      else if (key == "rho_max") b.market.rho_max = parse_double(val, line_no);
      else if (key == "wan_penalty_ms") b.market.wan_penalty_ms = parse_double(val, line_no);
      else bail(line_no, "unknown key '" + key + "' in [market]");
    } else if (section == "federation") {
      if (key == "delta_prop_s") b.federation.delta_prop_s = parse_double(val, line_no);
      else if (key == "delta_health_s") b.federation.delta_health_s = parse_double(val, line_no);
      else if (key == "tau_fed_s") b.federation.tau_fed_s = parse_double(val, line_no);
      else if (key == "k_miss") b.federation.k_miss = parse_int(val, line_no);
      else if (key == "wan_max_ms") b.federation.wan_max_ms = parse_double(val, line_no);
      else if (key == "recovery_probe_every")
        b.federation.recovery_probe_every = parse_int(val, line_no);
      else bail(line_no, "unknown key '" + key + "' in [federation]");
    } else if (section == "weights") {
      if (key == "alpha") b.weights.alpha = parse_double(val, line_no);
      else if (key == "beta") b.weights.beta = parse_double(val, line_no);
      else if (key == "zeta") b.weights.zeta = parse_double(val, line_no);
      else bail(line_no, "unknown key '" + key + "' in [weights]");
    } else if (section == "engine") {
      if (key == "base_service_ms") b.base_service_ms = parse_double(val, line_no);
      else if (key == "broker_decision_ms") b.broker_decision_ms = parse_double(val, line_no);
      else if (key == "max_stage_attempts") b.max_stage_attempts = parse_int(val, line_no);
      else bail(line_no, "unknown key '" + key + "' in [engine]");
    } else if (section == "failures") {
      if (key == "event") b.failures.events.push_back(parse_failure_event(val, line_no));
      else bail(line_no, "unknown key '" + key + "' in [failures]");
    } else if (section == "template") {
      has_template = true;
      if (key == "name") custom.kind = val;
      else if (key == "value_budget") custom.value_budget = parse_double(val, line_no);
      else if (key == "stage") custom.stages.push_back(parse_stage(val, line_no));
      else if (key == "edge") {
        auto parts = split_ws(val);
        if (parts.size() != 2) bail(line_no, "edge wants '<from> <to>'");
        custom.edges.push_back(
            {parse_int(parts[0], line_no), parse_int(parts[1], line_no), {}});
      } else bail(line_no, "unknown key '" + key + "' in [template]");
    }
  }

  if (!versioned) throw ConfigError("config: missing schema_version = 1");
  if (has_template) {
    if (custom.kind.empty())
      throw ConfigError("config: [template] requires a name");
    validate_template(custom);  // throws ConfigError on structural faults
    sc.base.custom_template = custom;
    sc.base.workload.pipeline_kind = custom.kind;
  }
  return sc;
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario_text(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace fedmarket
