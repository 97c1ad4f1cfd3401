/**
 * @file phases.cpp
 * @brief Cell execution, the seven campaign phase grids, the knee sweep
 *        and comparison-report rendering.
 */

#include "fedmarket/phases.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "fedmarket/errors.hpp"
#include "fedmarket/simnet.hpp"

namespace fedmarket {

namespace {

namespace fs = std::filesystem;

/* ==================================================================== */
/* Grid plumbing                                                         */
/* ==================================================================== */

// One grid point: a fully resolved scenario plus a human label used by the
// report renderers (governance letter, failure-scenario name, ...).
struct CellSpec {
  ScenarioConfig scenario;
  std::string label;
};

const std::vector<std::string> kGridPipelines = {"cqi-chain", "anomaly-sp",
                                                 "ran-entangled"};
const std::vector<std::string> kAllStrategies = {
    "market",   "oracle",         "oracle-sharded", "rr-global",
    "locality", "latency-greedy", "spillover"};
const std::vector<double> kKneeLambdas = {6, 9, 12, 15, 18, 21, 24, 27, 30};

// Phase grids own the experiment axes; only engine-fidelity knobs (latency,
// market, federation, weights, service time, topology) survive from a user
// supplied base scenario.
ScenarioConfig phase_base(const PhaseOptions& opts) {
  ScenarioConfig s = opts.base.value_or(ScenarioConfig{});
  s.base.strategy = "market";
  s.base.workload = WorkloadConfig{};
  s.base.governance = GovernanceScenario::D;
  s.base.failures.events.clear();
  s.base.custom_template.reset();
  s.seeds = {1, 2, 3, 4, 5};
  return s;
}

void set_cell(ScenarioConfig& s, const std::string& strategy,
              const std::string& pipeline, double lambda, double duration_s,
              double warmup_s) {
  s.base.strategy = strategy;
  s.base.workload.pipeline_kind = pipeline;
  s.base.workload.lambda_pps = lambda;
  s.base.workload.duration_s = duration_s;
  s.base.workload.warmup_s = warmup_s;
}

// Three workers per domain, lowest ids first: the stock pools are 12 wide,
// so this removes a quarter of every domain's capacity at once.
std::vector<FailureEvent> kill_three_per_domain(double at_s) {
  std::vector<FailureEvent> events;
  for (int base : {0, 12, 24, 36})
    for (int k = 0; k < 3; ++k)
      events.push_back(
          {at_s, FailureKind::worker_kill, std::to_string(base + k)});
  return events;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

/* ==================================================================== */
/* Cell execution                                                        */
/* ==================================================================== */

std::vector<std::string> cell_paths(const ScenarioConfig& cfg) {
  const SimConfig& base = cfg.base;
  std::string stem = cell_file_stem(base.strategy, base.workload.pipeline_kind,
                                    base.workload.lambda_pps);
  std::vector<std::string> paths;
  for (std::uint64_t seed : cfg.seeds)
    paths.push_back(
        (fs::path(cfg.out_dir) / (stem + "_" + std::to_string(seed) + ".csv"))
            .string());
  paths.push_back((fs::path(cfg.out_dir) / (stem + "_summary.csv")).string());
  return paths;
}

std::vector<CellSummary> simulate_cell(const ScenarioConfig& cfg,
                                       std::vector<std::string>* row_texts) {
  std::vector<CellSummary> summaries;
  for (std::uint64_t seed : cfg.seeds) {
    SimConfig c = cfg.base;
    c.workload.seed = seed;
    RunRecord rec = run_sim(c);
    if (row_texts) row_texts->push_back(rows_csv(rec));
    summaries.push_back(summarize(rec));
  }
  return summaries;
}

/* ==================================================================== */
/* Bounded pool over independent cells                                   */
/* ==================================================================== */

std::vector<std::vector<CellSummary>> run_grid(const std::vector<CellSpec>& cells,
                                               const PhaseOptions& opts,
                                               bool write_files) {
  if (write_files && !opts.force) {
    for (const CellSpec& cell : cells)
      for (const std::string& p : cell_paths(cell.scenario))
        if (fs::exists(p))
          throw ConfigError("output already exists: " + p +
                            " (pass --force to overwrite)");
  }

  std::vector<std::vector<CellSummary>> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;

  auto drain = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        if (write_files)
          results[i] = run_cell(cells[i].scenario, opts.force).summaries;
        else
          results[i] = simulate_cell(cells[i].scenario, nullptr);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  int n_threads = std::clamp<int>(opts.parallel, 1,
                                  static_cast<int>(cells.size() ? cells.size() : 1));
  if (n_threads <= 1) {
    drain();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(drain);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

/* ==================================================================== */
/* Grid enumerators                                                      */
/* ==================================================================== */

std::vector<CellSpec> allocation_grid(const PhaseOptions& opts,
                                      const std::string& dir) {
  std::vector<CellSpec> cells;
  for (const std::string& strategy : kAllStrategies)
    for (const std::string& pipeline : kGridPipelines)
      for (double lambda : {2.0, 5.0, 10.0}) {
        ScenarioConfig s = phase_base(opts);
        set_cell(s, strategy, pipeline, lambda, 300.0, 60.0);
        s.out_dir = dir;
        cells.push_back({s, strategy});
      }
  return cells;
}

std::vector<CellSpec> governance_grid(const PhaseOptions& opts,
                                      const std::string& dir) {
  std::vector<CellSpec> cells;
  for (GovernanceScenario gov :
       {GovernanceScenario::A, GovernanceScenario::B, GovernanceScenario::C,
        GovernanceScenario::D})
    for (const std::string& pipeline : kGridPipelines) {
      ScenarioConfig s = phase_base(opts);
      set_cell(s, "market", pipeline, 5.0, 300.0, 60.0);
      s.base.governance = gov;
      s.out_dir = (fs::path(dir) / to_string(gov)).string();
      cells.push_back({s, to_string(gov)});
    }
  return cells;
}

std::vector<CellSpec> saturation_grid(const PhaseOptions& opts,
                                      const std::string& dir) {
  std::vector<CellSpec> cells;
  for (const std::string& strategy : {std::string("rr-global"), std::string("market")})
    for (double lambda : {5.0, 8.0, 10.0, 15.0, 50.0}) {
      ScenarioConfig s = phase_base(opts);
      // Long warmup: past the knee the blind dispatcher's backlog grows
      // without bound, and the measured window should see the mature regime,
      // not the first seconds of queue growth.
      set_cell(s, strategy, "cqi-chain", lambda, 540.0, 480.0);
      s.out_dir = dir;
      cells.push_back({s, strategy});
    }
  return cells;
}

std::vector<CellSpec> failure_load_grid(const PhaseOptions& opts,
                                        const std::string& dir) {
  std::vector<CellSpec> cells;
  for (double lambda : {5.0, 8.0, 10.0}) {
    ScenarioConfig s = phase_base(opts);
    set_cell(s, "market", "cqi-chain", lambda, 300.0, 60.0);
    s.base.failures.events = kill_three_per_domain(120.0);
    s.out_dir = dir;
    cells.push_back({s, "market"});
  }
  return cells;
}

std::vector<CellSpec> heterogeneity_grid(const PhaseOptions& opts,
                                         const std::string& dir) {
  std::vector<CellSpec> cells;
  for (const std::string& strategy : {std::string("market"), std::string("rr-global")})
    for (const std::string& pipeline : kGridPipelines) {
      ScenarioConfig s = phase_base(opts);
      set_cell(s, strategy, pipeline, 10.0, 300.0, 60.0);
      s.base.failures.events = {
          {0.0, FailureKind::heterogeneity_profile, ""}};
      s.out_dir = dir;
      cells.push_back({s, strategy});
    }
  return cells;
}

std::vector<CellSpec> federation_grid(const PhaseOptions& opts,
                                      const std::string& dir) {
  std::vector<CellSpec> cells;
  auto make = [&](const std::string& label,
                  std::vector<FailureEvent> events) {
    ScenarioConfig s = phase_base(opts);
    set_cell(s, "market", "cqi-chain", 5.0, 300.0, 60.0);
    s.base.failures.events = std::move(events);
    s.out_dir = (fs::path(dir) / label).string();
    cells.push_back({s, label});
  };
  make("broker-kill", {{120.0, FailureKind::broker_kill, "d2"}});
  make("partition", {{120.0, FailureKind::partition_start, ""},
                     {240.0, FailureKind::partition_end, ""}});
  make("worker-kill", kill_three_per_domain(120.0));
  return cells;
}

std::vector<CellSpec> knee_grid(const PhaseOptions& opts,
                                const std::string& dir) {
  std::vector<CellSpec> cells;
  for (double lambda : kKneeLambdas) {
    ScenarioConfig s = phase_base(opts);
    set_cell(s, "rr-global", "cqi-chain", lambda, 120.0, 60.0);
    s.seeds = {1, 2};
    s.out_dir = dir;
    cells.push_back({s, "rr-global"});
  }
  return cells;
}

/* ==================================================================== */
/* Pooled statistics for the report renderers                            */
/* ==================================================================== */

double mean_completion_rate(const std::vector<CellSummary>& runs) {
  double sum = 0.0;
  for (const CellSummary& s : runs) sum += s.completion_rate;
  return runs.empty() ? 0.0 : sum / static_cast<double>(runs.size());
}

// Mean of the per-seed mean latencies over runs that completed anything.
std::optional<double> pooled_mean_latency(const std::vector<CellSummary>& runs) {
  double sum = 0.0;
  int n = 0;
  for (const CellSummary& s : runs)
    if (s.has_latency) {
      sum += s.mean_latency_ms;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::vector<CellSummary> flatten(const std::vector<std::vector<CellSummary>>& per_cell) {
  std::vector<CellSummary> flat;
  for (const auto& cell : per_cell)
    flat.insert(flat.end(), cell.begin(), cell.end());
  return flat;
}

/* ==================================================================== */
/* Report renderers                                                      */
/* ==================================================================== */

std::string allocation_report(const std::vector<CellSummary>& flat) {
  std::ostringstream out;
  for (const std::string& strategy : kAllStrategies) {
    if (strategy == "market") continue;
    out << comparison_report(flat, "market", strategy);
  }
  return out.str();
}

std::string governance_report(const std::vector<CellSpec>& cells,
                              const std::vector<std::vector<CellSummary>>& results) {
  // mean latency per (scenario, pipeline); deltas are against scenario A.
  std::map<std::string, std::map<std::string, double>> mean_ms;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto m = pooled_mean_latency(results[i]);
    if (m)
      mean_ms[cells[i].scenario.base.workload.pipeline_kind][cells[i].label] = *m;
  }
  std::ostringstream out;
  for (const std::string& pipeline : kGridPipelines) {
    auto it = mean_ms.find(pipeline);
    if (it == mean_ms.end()) continue;
    const auto& by_scenario = it->second;
    auto a = by_scenario.find("A");
    out << "  " << pipeline << ":";
    for (const auto& [scenario, ms] : by_scenario) {
      out << "  " << scenario << " " << fmt("%.2f", ms) << " ms";
      if (a != by_scenario.end() && scenario != "A" && a->second > 0.0)
        out << " (" << fmt("%+.2f", 100.0 * (ms - a->second) / a->second)
            << "% vs A)";
    }
    out << "\n";
  }
  return out.str();
}

std::string rate_table(const std::vector<CellSpec>& cells,
                       const std::vector<std::vector<CellSummary>>& results) {
  // label -> lambda -> mean CR, printed one strategy row per label.
  std::map<std::string, std::map<double, double>> by_label;
  for (std::size_t i = 0; i < cells.size(); ++i)
    by_label[cells[i].label][cells[i].scenario.base.workload.lambda_pps] =
        mean_completion_rate(results[i]);
  std::ostringstream out;
  for (const auto& [label, by_lambda] : by_label) {
    out << "  " << label << " completion:";
    for (const auto& [lambda, cr] : by_lambda)
      out << "  " << fmt("%g", lambda) << " pps " << fmt("%.3f", cr);
    out << "\n";
  }
  return out.str();
}

std::string heterogeneity_report(const std::vector<CellSpec>& cells,
                                 const std::vector<std::vector<CellSummary>>& results) {
  std::map<std::string, std::map<std::string, double>> mean_ms;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto m = pooled_mean_latency(results[i]);
    if (m)
      mean_ms[cells[i].scenario.base.workload.pipeline_kind][cells[i].label] = *m;
  }
  std::ostringstream out;
  for (const std::string& pipeline : kGridPipelines) {
    const auto& by_strategy = mean_ms[pipeline];
    auto market = by_strategy.find("market");
    auto rr = by_strategy.find("rr-global");
    if (market == by_strategy.end() || rr == by_strategy.end()) continue;
    out << "  " << pipeline << ": market " << fmt("%.2f", market->second)
        << " ms, rr-global " << fmt("%.2f", rr->second) << " ms, ratio "
        << fmt("%.3f", market->second / rr->second) << "\n";
  }
  return out.str();
}

std::string federation_report(const std::vector<CellSpec>& cells,
                              const std::vector<std::vector<CellSummary>>& results) {
  std::ostringstream out;
  for (std::size_t i = 0; i < cells.size(); ++i)
    out << "  " << cells[i].label << ": completion "
        << fmt("%.4f", mean_completion_rate(results[i])) << "\n";
  return out.str();
}

std::string knee_report(const std::vector<CellSpec>& cells,
                        const std::vector<std::vector<CellSummary>>& results,
                        const KneeFit& fit) {
  std::ostringstream out;
  out << rate_table(cells, results);
  if (fit.degenerate)
    out << "  knee: degenerate fit (no breakpoint in the sweep range)\n";
  else
    out << "  knee: " << fmt("%.1f", fit.breakpoint_pps) << " pps (95% CI ["
        << fmt("%.1f", fit.ci.lo) << ", " << fmt("%.1f", fit.ci.hi) << "])\n";
  return out.str();
}

KneeFit fit_knee_points(const std::vector<CellSpec>& cells,
                        const std::vector<std::vector<CellSummary>>& results) {
  std::vector<std::pair<double, double>> points;
  for (std::size_t i = 0; i < cells.size(); ++i)
    points.emplace_back(cells[i].scenario.base.workload.lambda_pps,
                        mean_completion_rate(results[i]));
  return knee_fit(points, 1000, 1);
}

}  // namespace

/* ==================================================================== */
/* Public surface                                                        */
/* ==================================================================== */

CellResult run_cell(const ScenarioConfig& cfg, bool force) {
  if (cfg.seeds.empty()) throw ConfigError("run_cell: seed list is empty");
  std::vector<std::string> paths = cell_paths(cfg);
  if (!force)
    for (const std::string& p : paths)
      if (fs::exists(p))
        throw ConfigError("output already exists: " + p +
                          " (pass --force to overwrite)");

  CellResult result;
  std::vector<std::string> texts;
  result.summaries = simulate_cell(cfg, &texts);
  texts.push_back(summary_csv(result.summaries));

  // All simulation work is done; emit everything through temp-and-rename.
  for (std::size_t i = 0; i < paths.size(); ++i)
    write_file_atomic(paths[i], texts[i]);
  result.files_written = std::move(paths);
  return result;
}

std::vector<std::string> phase_names() {
  return {"allocation-grid", "governance-grid", "saturation",
          "failure-load",    "heterogeneity",   "federation",
          "knee-calibration"};
}

namespace {

std::vector<CellSpec> build_phase_cells(const std::string& phase,
                                        const PhaseOptions& opts,
                                        const std::string& dir) {
  if (phase == "allocation-grid") return allocation_grid(opts, dir);
  if (phase == "governance-grid") return governance_grid(opts, dir);
  if (phase == "saturation") return saturation_grid(opts, dir);
  if (phase == "failure-load") return failure_load_grid(opts, dir);
  if (phase == "heterogeneity") return heterogeneity_grid(opts, dir);
  if (phase == "federation") return federation_grid(opts, dir);
  if (phase == "knee-calibration") return knee_grid(opts, dir);
  throw ConfigError("unknown phase: " + phase);
}

}  // namespace

PhaseShape phase_shape(const std::string& phase) {
  PhaseShape shape;
  for (const CellSpec& cell : build_phase_cells(phase, PhaseOptions{}, "")) {
    ++shape.cells;
    shape.runs += static_cast<int>(cell.scenario.seeds.size());
  }
  return shape;
}

PhaseReport run_phase(const std::string& phase, const PhaseOptions& opts) {
  const std::string dir = (fs::path(opts.out_dir) / phase).string();
  std::vector<CellSpec> cells = build_phase_cells(phase, opts, dir);
  auto results = run_grid(cells, opts, /*write_files=*/true);

  PhaseReport report;
  report.phase = phase;
  report.cells = static_cast<int>(cells.size());
  for (const auto& r : results) report.runs += static_cast<int>(r.size());
  report.summaries = flatten(results);

  std::ostringstream text;
  text << "phase " << phase << ": " << report.cells << " cells, "
       << report.runs << " runs -> " << dir << "\n";
  if (phase == "allocation-grid") text << allocation_report(report.summaries);
  else if (phase == "governance-grid") text << governance_report(cells, results);
  else if (phase == "saturation" || phase == "failure-load")
    text << rate_table(cells, results);
  else if (phase == "heterogeneity") text << heterogeneity_report(cells, results);
  else if (phase == "federation") text << federation_report(cells, results);
  else if (phase == "knee-calibration") {
    report.knee = fit_knee_points(cells, results);
    text << knee_report(cells, results, *report.knee);
  }
  report.text = text.str();
  return report;
}

KneeFit calibrate_knee(const PhaseOptions& opts) {
  std::vector<CellSpec> cells = knee_grid(opts, /*dir=*/"");
  auto results = run_grid(cells, opts, /*write_files=*/false);
  return fit_knee_points(cells, results);
}

std::string comparison_report(const std::vector<CellSummary>& summaries,
                              const std::string& candidate,
                              const std::string& reference) {
  using Key = std::tuple<std::string, double, std::uint64_t>;
  std::map<Key, const CellSummary*> ref;
  for (const CellSummary& s : summaries)
    if (s.strategy == reference)
      ref[{s.pipeline_kind, s.lambda_pps, s.seed}] = &s;

  int wins = 0, losses = 0, ties = 0, points = 0;
  for (const CellSummary& s : summaries) {
    if (s.strategy != candidate) continue;
    auto it = ref.find({s.pipeline_kind, s.lambda_pps, s.seed});
    if (it == ref.end()) continue;
    const CellSummary& r = *it->second;
    ++points;
    CellOutcome outcome;
    if (s.has_latency && r.has_latency)
      outcome = compare_mean_latency(s.mean_latency_ms, r.mean_latency_ms);
    else if (s.completion_rate != r.completion_rate)
      outcome = s.completion_rate > r.completion_rate ? CellOutcome::win
                                                      : CellOutcome::loss;
    else
      outcome = CellOutcome::tie;
    if (outcome == CellOutcome::win) ++wins;
    else if (outcome == CellOutcome::loss) ++losses;
    else ++ties;
  }

  std::ostringstream out;
  out << "  " << candidate << " vs " << reference << ": " << points
      << " points, " << wins << " wins / " << losses << " losses / " << ties
      << " ties\n";
  return out.str();
}

}  // namespace fedmarket
