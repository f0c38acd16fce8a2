#pragma once

#include <string>
#include <vector>

#include "compdial/experiment.hpp"

namespace compdial {

struct ReportRow {
  int milestone = 0;
  long dialogues = 0;
  double mean_success = 0.0;
  double std_success = 0.0;  // sample stddev across runs, 0 for a single run
  double mean_turns = 0.0;
};

/// One named curve, e.g. all seeds of one policy.
struct ReportSeries {
  std::string label;
  std::vector<ReportRow> rows;
};

/// Per-milestone mean and stddev across runs. Throws ConfigError when the
/// runs disagree on milestone count or dialogue counts, or lack eval fields.
ReportSeries aggregate_runs(const std::string& label, const std::vector<std::vector<MilestoneRecord>>& runs);

/// Header "milestone,dialogues,mean_success,std_success,mean_turns", one row per milestone.
std::string report_csv(const ReportSeries& series);

/// Success-rate learning curves with a +-1 stddev band per series.
std::string report_svg(const std::vector<ReportSeries>& series, const std::string& title);

}  // namespace compdial
