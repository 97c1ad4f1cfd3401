/**
 * @file csv.hpp
 * @brief Versioned CSV emission for per-pipeline rows and cell
 *        summaries, deterministic file naming, and atomic writes.
 */
#pragma once

#include <string>
#include <vector>

#include "fedmarket/metrics.hpp"
#include "fedmarket/simnet.hpp"

namespace fedmarket {

// Schema tags; always the first line of an emitted file. A reader that
// sees an unknown tag must refuse rather than guess at columns.
inline constexpr const char* rows_schema_tag = "# fedmarket-rows-v1";
inline constexpr const char* summary_schema_tag = "# fedmarket-summary-v1";

// Deterministic, locale-free number rendering (%.10g, C locale).
std::string format_number(double v);

// Deterministic file stem: strategy_pipeline_lambda, to which callers
// append _seed.csv (row files) or _summary.csv (pooled summaries).
std::string cell_file_stem(const std::string& strategy,
                           const std::string& pipeline, double lambda_pps);

// Render one run: schema tag, a metadata comment, the column header,
// then one line per pipeline in arrival order. e2e_ms stays empty for
// pipelines that did not complete (success-only latency pooling).
std::string rows_csv(const RunRecord& run);

// Render pooled summaries, one line per cell; latency columns stay
// empty when a cell completed nothing.
std::string summary_csv(const std::vector<CellSummary>& cells);

// Parse a summary file produced by summary_csv. Rejects unknown schema
// tags and column drift with ConfigError.
std::vector<CellSummary> parse_summary_csv(const std::string& text);

// Write via a temp file + rename so no partial file is ever visible;
// creates parent directories. read_file slurps bytes for comparisons.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace fedmarket
