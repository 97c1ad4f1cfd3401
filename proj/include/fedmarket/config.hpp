/**
 * @file config.hpp
 * @brief Scenario files: a small sectioned key = value format with an
 *        explicit schema version, strict unknown-key rejection, and
 *        support for custom pipeline templates and failure scripts.
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedmarket/simnet.hpp"

namespace fedmarket {

// Everything a campaign cell needs: the engine configuration plus the
// seed list and output directory. Environment variables override
// nothing; all state lives in the file and the command line.
struct ScenarioConfig {
  SimConfig base;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string out_dir = "out";
};

// Parse scenario text. The first setting must be `schema_version = 1`,
// before any [section]. Sections: [run], [latency], [market],
// [federation], [weights], [engine], [failures], [template]. Unknown
// sections or keys raise ConfigError naming the offender and line.
ScenarioConfig parse_scenario_text(const std::string& text);

// Load and parse a scenario file; errors mention the path.
ScenarioConfig load_scenario_file(const std::string& path);

}  // namespace fedmarket
