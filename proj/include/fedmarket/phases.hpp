#pragma once
/**
 * @file phases.hpp
 * @brief Campaign drivers: single-cell execution with deterministic file
 *        naming, the seven study phases, the saturation-knee sweep and
 *        per-cell comparison reports.
 *
 * A cell is one (strategy, pipeline, lambda) point run across a seed list.
 * Phases enumerate fixed cell grids, fan them out over a bounded worker
 * pool and emit CSVs plus a human-readable report; identical configs
 * reproduce identical bytes.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedmarket/config.hpp"
#include "fedmarket/csv.hpp"
#include "fedmarket/metrics.hpp"

namespace fedmarket {

/* ==================================================================== */
/* Single cell                                                           */
/* ==================================================================== */

struct CellResult {
  std::vector<std::string> files_written;  // row files then pooled summary
  std::vector<CellSummary> summaries;      // one per seed, seed order
};

// Runs cfg.base once per seed and writes <stem>_<seed>.csv row files plus
// one pooled <stem>_summary.csv under cfg.out_dir. Existing outputs are
// refused unless force; every simulation finishes before the first byte is
// written and each file lands via temp-and-rename, so a failing run leaves
// no partial output behind.
CellResult run_cell(const ScenarioConfig& cfg, bool force = false);

/* ==================================================================== */
/* Phases                                                                */
/* ==================================================================== */

struct PhaseOptions {
  std::string out_dir = "out";
  int parallel = 1;   // worker threads across independent cells
  bool force = false;
  // Optional base scenario (latency / market / federation / engine
  // overrides). Grid axes — strategy, pipeline, lambda, seeds, failures,
  // governance — are owned by the phase and overwrite whatever it says.
  std::optional<ScenarioConfig> base;
};

struct PhaseReport {
  std::string phase;
  int cells = 0;
  int runs = 0;
  std::vector<CellSummary> summaries;  // deterministic grid order
  std::string text;                    // rendered report
  std::optional<KneeFit> knee;         // knee-calibration only
};

std::vector<std::string> phase_names();

// Grid dimensions without running anything: cells x seeds.
struct PhaseShape {
  int cells = 0;
  int runs = 0;
};
PhaseShape phase_shape(const std::string& phase);

// Enumerates the named phase's grid, runs every cell and writes CSVs under
// out_dir/<phase>/... Unknown names raise ConfigError.
PhaseReport run_phase(const std::string& phase, const PhaseOptions& opts);

/* ==================================================================== */
/* Knee sweep                                                            */
/* ==================================================================== */

// Round-robin completion-rate sweep over the calibration lambda grid,
// fitted with the segmented regression. Runs in memory (no files); the
// knee-calibration phase wraps this same grid with CSV emission.
KneeFit calibrate_knee(const PhaseOptions& opts);

/* ==================================================================== */
/* Comparison report                                                     */
/* ==================================================================== */

// Win/loss/tie counts of `candidate` against `reference` mean latency over
// every (pipeline, lambda, seed) point present for both strategies, with
// the 1 ms tie band. Points where either side lacks latency data count as
// a completion-rate comparison instead (higher CR wins, exact ties tie).
std::string comparison_report(const std::vector<CellSummary>& summaries,
                              const std::string& candidate,
                              const std::string& reference);

}  // namespace fedmarket
