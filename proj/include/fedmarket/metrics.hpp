/**
 * @file metrics.hpp
 * @brief Campaign cell summaries and the statistical toolkit behind the
 *        comparison tables: paired sign test, Hodges-Lehmann location
 *        estimate, percentile bootstrap, segmented-regression knee
 *        calibration, and the social-welfare efficiency gap.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fedmarket/simnet.hpp"

namespace fedmarket {

/* ==================================================================== */
/* Cell summaries                                                        */
/* ==================================================================== */

struct CellSummary {
  std::string strategy;
  std::string pipeline_kind;
  double lambda_pps = 0.0;
  std::uint64_t seed = 0;

  long n_events = 0;  // pipelines arriving inside the measurement window
  long n_completed = 0;
  double completion_rate = 0.0;

  // Latency statistics pool completed pipelines only. When nothing
  // completed there is no latency to report and has_latency stays false.
  bool has_latency = false;
  double mean_latency_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double p99_ms = 0.0;
};

// Nearest-rank percentile: the value at 1-indexed rank ceil(pct/100 * n)
// of the ascending-sorted sample, clamped into the sample. pct in (0,100].
double percentile_nearest_rank(std::vector<double> values, double pct);

// Pool one run into a cell summary. Throws ConfigError on an empty window.
CellSummary summarize(const RunRecord& run);

/* ==================================================================== */
/* Paired statistics                                                     */
/* ==================================================================== */

// Alternative hypothesis direction for the one-tailed paired sign test:
// `less` counts negative differences as wins, `greater` positive ones.
enum class Tail { less, greater };

// One-tailed paired sign test. Zero differences are dropped before
// counting; the p-value is the exact binomial tail P(X >= wins | n, 1/2).
// Throws ConfigError when no nonzero differences remain.
double sign_test(const std::vector<double>& diffs, Tail direction);

// Hodges-Lehmann location estimate: the median of all n(n+1)/2 Walsh
// averages (pairwise means, self-pairs included). Throws on empty input.
double hodges_lehmann(const std::vector<double>& diffs);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile bootstrap confidence interval for an arbitrary statistic.
// Draws `resamples` with-replacement resamples of the data, evaluates the
// statistic on each, and reads the nearest-rank (1-level)/2 and
// (1+level)/2 quantiles of the resample distribution. Deterministic for
// a fixed seed. level in (0,1), resamples >= 1.
Interval bootstrap_ci(const std::vector<double>& values,
                      const std::function<double(const std::vector<double>&)>& statistic,
                      int resamples, double level, std::uint64_t rng_seed);

/* ==================================================================== */
/* Knee calibration                                                      */
/* ==================================================================== */

struct KneeFit {
  double breakpoint_pps = 0.0;
  Interval ci;            // percentile bootstrap over point resamples
  bool degenerate = false;  // flat or kink-free response: no knee
  double sse = 0.0;         // residual of the winning two-segment fit
};

// Two-segment least squares of mean completion rate against offered rate:
// a continuous broken line y = b0 + b1*x + b2*max(0, x - knee), fitted by
// ordinary least squares at every candidate knee on a 0.1-pps grid and
// minimised over candidates (ties to the smallest knee). Candidates keep
// at least two points on each side. Requires >= 4 points.
KneeFit knee_fit(const std::vector<std::pair<double, double>>& points,
                 int bootstrap_resamples, std::uint64_t rng_seed);

/* ==================================================================== */
/* Efficiency                                                            */
/* ==================================================================== */

struct EfficiencyReport {
  double eta_market = 0.0;  // social welfare: sum of values minus costs
  double eta_oracle = 0.0;
  double delta_eff = 0.0;  // 1 - eta_market / eta_oracle
};

// Social-welfare gap between matched market and oracle run sets. Each
// completed pipeline contributes (pipeline_value - placement cost).
// Throws ConfigError on mismatched run counts or eta_oracle <= 0.
EfficiencyReport efficiency_gap(const std::vector<RunRecord>& market_runs,
                                const std::vector<RunRecord>& oracle_runs,
                                double pipeline_value);

/* ==================================================================== */
/* Cell comparisons                                                      */
/* ==================================================================== */

enum class CellOutcome { win, loss, tie };

// Mean-latency cell outcome for the first argument: differences inside
// the +/-1 ms tie band count as ties, below-band means the first side won.
CellOutcome compare_mean_latency(double a_mean_ms, double b_mean_ms);

}  // namespace fedmarket
