#pragma once
/**
 * @file acceptance.hpp
 * @brief The release gate: every published behavioural claim checked as an
 *        executable criterion with pinned tolerances.
 *
 * Shared by the `accept` CLI verb and the standalone gate binary. Criteria
 * stream one PASS/FAIL line each; the suite result maps onto process exit
 * codes (0 clean, otherwise 1 + failure count, capped).
 */

#include <iosfwd>
#include <string>
#include <vector>

namespace fedmarket {

struct CriterionResult {
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;  // one-line evidence: measured values vs bounds
};

struct AcceptanceReport {
  std::vector<CriterionResult> results;
  int failed = 0;
};

// Names of the registered criteria, gate order.
std::vector<std::string> acceptance_criteria();

// Runs every criterion whose name contains `filter` (empty runs all),
// writing one line per criterion to `out` as results arrive. A criterion
// that throws is recorded as failed with the exception text.
AcceptanceReport run_acceptance(std::ostream& out, const std::string& filter = "");

// 0 when everything passed, else 1 + failures, capped at 120 so the value
// survives as a process exit status.
int acceptance_exit_code(const AcceptanceReport& report);

}  // namespace fedmarket
