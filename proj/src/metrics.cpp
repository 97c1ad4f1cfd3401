/**
 * @file metrics.cpp
 * @brief Cell summaries, paired statistics, bootstrap intervals, knee
 *        calibration, and the efficiency gap.
 */
#include "fedmarket/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fedmarket/errors.hpp"

namespace fedmarket {

namespace {

/* Nearest rank into an ascending-sorted sample, as a 0-based index.
   The small guard keeps rounds like 0.2*5 -> 1.0000000000000002 from
   inflating the rank past the mathematically exact value. */
size_t rank_index(size_t n, double pct) {
  double raw = pct * static_cast<double>(n) / 100.0;
  long rank = static_cast<long>(std::ceil(raw - 1e-7));
  if (rank < 1) rank = 1;
  if (rank > static_cast<long>(n)) rank = static_cast<long>(n);
  return static_cast<size_t>(rank - 1);
}

double sorted_percentile(const std::vector<double>& sorted, double pct) {
  return sorted[rank_index(sorted.size(), pct)];
}

}  // namespace

/* ==================================================================== */
/* Percentiles and summaries                                             */
/* ==================================================================== */

double percentile_nearest_rank(std::vector<double> values, double pct) {
  if (values.empty())
    throw ConfigError("percentile: empty sample");
  if (!(pct > 0.0) || pct > 100.0)
    throw ConfigError("percentile: pct must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  return sorted_percentile(values, pct);
}

CellSummary summarize(const RunRecord& run) {
  if (run.rows.empty())
    throw ConfigError("summarize: run has no pipelines in the measurement window");

  CellSummary s;
  s.strategy = run.strategy;
  s.pipeline_kind = run.pipeline_kind;
  s.lambda_pps = run.lambda_pps;
  s.seed = run.seed;
  s.n_events = static_cast<long>(run.rows.size());

  std::vector<double> done_ms;
  for (const auto& row : run.rows)
    if (row.completed) done_ms.push_back(row.e2e_ms);
  s.n_completed = static_cast<long>(done_ms.size());
  s.completion_rate =
      static_cast<double>(s.n_completed) / static_cast<double>(s.n_events);

  if (!done_ms.empty()) {
    s.has_latency = true;
    double sum = 0.0;
    for (double ms : done_ms) sum += ms;
    s.mean_latency_ms = sum / static_cast<double>(done_ms.size());
    std::sort(done_ms.begin(), done_ms.end());
    s.p50_ms = sorted_percentile(done_ms, 50.0);
    s.p95_ms = sorted_percentile(done_ms, 95.0);
    s.p99_ms = sorted_percentile(done_ms, 99.0);
  }
  return s;
}

/* ==================================================================== */
/* Paired statistics                                                     */
/* ==================================================================== */

double sign_test(const std::vector<double>& diffs, Tail direction) {
  long n = 0, wins = 0;
  for (double d : diffs) {
    if (d == 0.0) continue;  // ties carry no directional information
    n += 1;
    if (direction == Tail::less ? d < 0.0 : d > 0.0) wins += 1;
  }
  if (n == 0)
    throw ConfigError("sign_test: no nonzero differences");

  // Exact binomial tail: sum C(n,k) for k = wins..n by downward
  // recurrence from C(n,n) = 1, then scale by 2^-n. Keeps n-of-n at
  // exactly 2^-n.
  double coeff = 1.0, sum = 1.0;
  for (long k = n; k > wins; --k) {
    coeff = coeff * static_cast<double>(k) / static_cast<double>(n - k + 1);
    sum += coeff;
  }
  return std::min(1.0, sum * std::ldexp(1.0, static_cast<int>(-n)));
}

double hodges_lehmann(const std::vector<double>& diffs) {
  if (diffs.empty())
    throw ConfigError("hodges_lehmann: empty sample");
  std::vector<double> walsh;
  walsh.reserve(diffs.size() * (diffs.size() + 1) / 2);
  for (size_t i = 0; i < diffs.size(); ++i)
    for (size_t j = i; j < diffs.size(); ++j)
      walsh.push_back((diffs[i] + diffs[j]) / 2.0);
  std::sort(walsh.begin(), walsh.end());
  size_t m = walsh.size();
  if (m % 2 == 1) return walsh[m / 2];
  return (walsh[m / 2 - 1] + walsh[m / 2]) / 2.0;
}

Interval bootstrap_ci(const std::vector<double>& values,
                      const std::function<double(const std::vector<double>&)>& statistic,
                      int resamples, double level, std::uint64_t rng_seed) {
  if (values.empty())
    throw ConfigError("bootstrap_ci: empty sample");
  if (resamples < 1)
    throw ConfigError("bootstrap_ci: need at least one resample");
  if (!(level > 0.0) || !(level < 1.0))
    throw ConfigError("bootstrap_ci: level must lie in (0, 1)");

  std::mt19937_64 rng(rng_seed);
  size_t n = values.size();
  std::vector<double> draw(n), stats;
  stats.reserve(static_cast<size_t>(resamples));
  for (int r = 0; r < resamples; ++r) {
    for (size_t i = 0; i < n; ++i) draw[i] = values[rng() % n];
    stats.push_back(statistic(draw));
  }
  std::sort(stats.begin(), stats.end());
  return {sorted_percentile(stats, (1.0 - level) / 2.0 * 100.0),
          sorted_percentile(stats, (1.0 + level) / 2.0 * 100.0)};
}

/* ==================================================================== */
/* Knee calibration                                                      */
/* ==================================================================== */

namespace {

constexpr double knee_grid_step = 0.1;

struct HingeFit {
  double b1 = 0.0;  // first-segment slope
  double b2 = 0.0;  // slope change past the knee
  double sse = 0.0;
  bool ok = false;
};

/* Ordinary least squares of y on {1, x, (x - knee)+} via the 3x3 normal
   equations with partial pivoting. */
HingeFit fit_hinge(const std::vector<std::pair<double, double>>& pts, double knee) {
  double a[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  double rhs[3] = {0, 0, 0};
  for (const auto& [x, y] : pts) {
    double col[3] = {1.0, x, std::max(0.0, x - knee)};
    for (int i = 0; i < 3; ++i) {
      rhs[i] += col[i] * y;
      for (int j = 0; j < 3; ++j) a[i][j] += col[i] * col[j];
    }
  }

  double scale = 0.0;
  for (auto& row : a)
    for (double v : row) scale = std::max(scale, std::abs(v));
  int perm[3] = {0, 1, 2};
  for (int c = 0; c < 3; ++c) {
    int pivot = c;
    for (int r = c + 1; r < 3; ++r)
      if (std::abs(a[perm[r]][c]) > std::abs(a[perm[pivot]][c])) pivot = r;
    std::swap(perm[c], perm[pivot]);
    if (std::abs(a[perm[c]][c]) <= scale * 1e-12) return {};  // singular basis
    for (int r = c + 1; r < 3; ++r) {
      double f = a[perm[r]][c] / a[perm[c]][c];
      for (int j = c; j < 3; ++j) a[perm[r]][j] -= f * a[perm[c]][j];
      rhs[perm[r]] -= f * rhs[perm[c]];
    }
  }
  double beta[3];
  for (int c = 2; c >= 0; --c) {
    double v = rhs[perm[c]];
    for (int j = c + 1; j < 3; ++j) v -= a[perm[c]][j] * beta[j];
    beta[c] = v / a[perm[c]][c];
  }

  HingeFit f;
  f.b1 = beta[1];
  f.b2 = beta[2];
  f.ok = true;
  for (const auto& [x, y] : pts) {
    double resid = y - (beta[0] + beta[1] * x + beta[2] * std::max(0.0, x - knee));
    f.sse += resid * resid;
  }
  return f;
}

struct BestKnee {
  double knee = 0.0;
  HingeFit fit;
  bool found = false;
};

/* Minimise the two-segment SSE over knee candidates on the 0.1-pps grid,
   keeping at least two points on each side; ties go to the smallest knee. */
BestKnee best_over_grid(const std::vector<std::pair<double, double>>& pts) {
  double xmin = pts[0].first, xmax = pts[0].first;
  for (const auto& [x, y] : pts) {
    (void)y;
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
  }
  long k_lo = static_cast<long>(std::ceil(xmin / knee_grid_step - 1e-9));
  long k_hi = static_cast<long>(std::floor(xmax / knee_grid_step + 1e-9));

  BestKnee best;
  for (long k = k_lo; k <= k_hi; ++k) {
    double b = static_cast<double>(k) * knee_grid_step;
    long left = 0, right = 0;
    for (const auto& [x, y] : pts) {
      (void)y;
      (x <= b ? left : right) += 1;
    }
    if (left < 2 || right < 2) continue;
    HingeFit f = fit_hinge(pts, b);
    if (!f.ok) continue;
    if (!best.found || f.sse < best.fit.sse) best = {b, f, true};
  }
  return best;
}

bool kink_free(const std::vector<std::pair<double, double>>& pts, const BestKnee& b) {
  double ymin = pts[0].second, ymax = pts[0].second;
  for (const auto& [x, y] : pts) {
    (void)x;
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  return ymax - ymin < 1e-12 || std::abs(b.fit.b2) < 1e-9;
}

}  // namespace

KneeFit knee_fit(const std::vector<std::pair<double, double>>& points,
                 int bootstrap_resamples, std::uint64_t rng_seed) {
  if (points.size() < 4)
    throw ConfigError("knee_fit: need at least four (rate, completion) points");

  BestKnee best = best_over_grid(points);
  if (!best.found)
    throw ConfigError("knee_fit: no candidate keeps two points on each side");

  KneeFit out;
  out.breakpoint_pps = best.knee;
  out.sse = best.fit.sse;
  out.degenerate = kink_free(points, best);
  out.ci = {best.knee, best.knee};
  if (out.degenerate || bootstrap_resamples < 1) return out;

  std::mt19937_64 rng(rng_seed);
  size_t n = points.size();
  std::vector<std::pair<double, double>> draw(n);
  std::vector<double> knees;
  knees.reserve(static_cast<size_t>(bootstrap_resamples));
  for (int r = 0; r < bootstrap_resamples; ++r) {
    for (size_t i = 0; i < n; ++i) draw[i] = points[rng() % n];
    BestKnee cand = best_over_grid(draw);
    if (cand.found && !kink_free(draw, cand)) knees.push_back(cand.knee);
  }
  if (!knees.empty()) {
    std::sort(knees.begin(), knees.end());
    out.ci = {sorted_percentile(knees, 2.5), sorted_percentile(knees, 97.5)};
  }
  return out;
}

/* ==================================================================== */
/* Efficiency and cell outcomes                                          */
/* ==================================================================== */

namespace {
double welfare(const std::vector<RunRecord>& runs, double pipeline_value) {
  double eta = 0.0;
  for (const auto& run : runs)
    for (const auto& row : run.rows)
      if (row.completed) eta += pipeline_value - row.placement_cost;
  return eta;
}
}  // namespace

EfficiencyReport efficiency_gap(const std::vector<RunRecord>& market_runs,
                                const std::vector<RunRecord>& oracle_runs,
                                double pipeline_value) {
  if (market_runs.empty() || market_runs.size() != oracle_runs.size())
    throw ConfigError("efficiency_gap: run sets must be nonempty and matched");

  EfficiencyReport rep;
  rep.eta_market = welfare(market_runs, pipeline_value);
  rep.eta_oracle = welfare(oracle_runs, pipeline_value);
  if (rep.eta_oracle <= 0.0)
    throw ConfigError("efficiency_gap: oracle welfare must be positive");
  rep.delta_eff = 1.0 - rep.eta_market / rep.eta_oracle;
  return rep;
}

CellOutcome compare_mean_latency(double a_mean_ms, double b_mean_ms) {
  double diff = a_mean_ms - b_mean_ms;
  if (std::abs(diff) < 1.0) return CellOutcome::tie;
  return diff < 0.0 ? CellOutcome::win : CellOutcome::loss;
}

}  // namespace fedmarket
