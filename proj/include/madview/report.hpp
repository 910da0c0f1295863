#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace madview {

struct ReportOptions {
  std::vector<std::string> run_dirs;
  std::string out_dir;
};

// Aggregates eval.csv curves from one or more run directories. Runs sharing a
// config hash are grouped as seeds of one configuration; per subset and step
// the report carries the seed mean and a 95% normal-approximation confidence
// band (mean +/- 1.96 * std / sqrt(seeds)). Emits summary.csv, an SVG curve
// plot per subset, and a final-step table on `out`.
void generate_report(const ReportOptions& options, std::ostream& out);

}  // namespace madview
