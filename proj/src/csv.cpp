/**
 * @file csv.cpp
 * @brief CSV rendering, parsing, and atomic file IO.
 */
#include "fedmarket/csv.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedmarket/errors.hpp"
#include "fedmarket/federation.hpp"

namespace fedmarket {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string cell_file_stem(const std::string& strategy,
                           const std::string& pipeline, double lambda_pps) {
  return strategy + "_" + pipeline + "_" + format_number(lambda_pps);
}

/* ==================================================================== */
/* Rendering                                                             */
/* ==================================================================== */

namespace {
const char* rows_header =
    "pipeline_id,arrival_s,origin_domain,accepted,completed,e2e_ms,"
    "domains_crossed,placement_cost,reject_reason";
const char* summary_header =
    "strategy,pipeline,lambda_pps,seed,n_events,n_completed,"
    "completion_rate,mean_latency_ms,p50_ms,p95_ms,p99_ms";
}  // namespace

std::string rows_csv(const RunRecord& run) {
  std::ostringstream out;
  out << rows_schema_tag << "\n";
  out << "# strategy=" << run.strategy << " pipeline=" << run.pipeline_kind
      << " lambda_pps=" << format_number(run.lambda_pps) << " seed=" << run.seed
      << " governance=" << to_string(run.governance)
      << " warmup_s=" << format_number(run.warmup_s)
      << " duration_s=" << format_number(run.duration_s) << "\n";
  out << rows_header << "\n";
  for (const auto& r : run.rows) {
    out << r.pipeline_id << "," << format_number(r.arrival_s) << ","
        << r.origin_domain << "," << (r.accepted ? 1 : 0) << ","
        << (r.completed ? 1 : 0) << ","
        << (r.completed ? format_number(r.e2e_ms) : std::string()) << ","
        << r.domains_crossed << "," << format_number(r.placement_cost) << ","
        << r.reject_reason << "\n";
  }
  return out.str();
}

std::string summary_csv(const std::vector<CellSummary>& cells) {
  std::ostringstream out;
  out << summary_schema_tag << "\n" << summary_header << "\n";
  for (const auto& c : cells) {
    out << c.strategy << "," << c.pipeline_kind << ","
        << format_number(c.lambda_pps) << "," << c.seed << "," << c.n_events
        << "," << c.n_completed << "," << format_number(c.completion_rate)
        << ",";
    if (c.has_latency)
      out << format_number(c.mean_latency_ms) << ","
          << format_number(c.p50_ms) << "," << format_number(c.p95_ms) << ","
          << format_number(c.p99_ms);
    else
      out << ",,,";
    out << "\n";
  }
  return out.str();
}

/* ==================================================================== */
/* Parsing                                                               */
/* ==================================================================== */

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double field_double(const std::string& s, const char* what) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("summary csv: bad ") + what + " '" + s + "'");
  }
}
}  // namespace

std::vector<CellSummary> parse_summary_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != summary_schema_tag)
    throw ConfigError("summary csv: missing schema tag '" +
                      std::string(summary_schema_tag) + "'");
  bool saw_header = false;
  std::vector<CellSummary> cells;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line != summary_header)
        throw ConfigError("summary csv: column drift: '" + line + "'");
      saw_header = true;
      continue;
    }
    auto f = split_csv_line(line);
    if (f.size() != 11)
      throw ConfigError("summary csv: expected 11 fields, got " +
                        std::to_string(f.size()));
    CellSummary c;
    c.strategy = f[0];
    c.pipeline_kind = f[1];
    c.lambda_pps = field_double(f[2], "lambda_pps");
    c.seed = static_cast<std::uint64_t>(field_double(f[3], "seed"));
    c.n_events = static_cast<long>(field_double(f[4], "n_events"));
    c.n_completed = static_cast<long>(field_double(f[5], "n_completed"));
    c.completion_rate = field_double(f[6], "completion_rate");
    c.has_latency = !f[7].empty();
    if (c.has_latency) {
      c.mean_latency_ms = field_double(f[7], "mean_latency_ms");
      c.p50_ms = field_double(f[8], "p50_ms");
      c.p95_ms = field_double(f[9], "p95_ms");
      c.p99_ms = field_double(f[10], "p99_ms");
    }
    cells.push_back(c);
  }
  if (!saw_header) throw ConfigError("summary csv: missing column header");
  return cells;
}

/* ==================================================================== */
/* Files                                                                 */
/* ==================================================================== */

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec)
      throw ConfigError("cannot create directory '" +
                        p.parent_path().string() + "': " + ec.message());
  }
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp + "'");
    out << content;
    if (!out) throw ConfigError("short write to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ConfigError("cannot rename '" + tmp + "' into place: " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace fedmarket
