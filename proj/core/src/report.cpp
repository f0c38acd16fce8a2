#include "compdial/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "compdial/errors.hpp"

namespace compdial {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

ReportSeries aggregate_runs(const std::string& label, const std::vector<std::vector<MilestoneRecord>>& runs) {
  if (runs.empty()) throw ConfigError("report needs at least one metrics file");
  const std::size_t m = runs.front().size();
  if (m == 0) throw ConfigError("report: metrics file has no milestones");
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].size() != m) {
      throw ConfigError("report: mismatched milestone grids (" + std::to_string(m) + " vs " +
                        std::to_string(runs[r].size()) + " milestones)");
    }
  }
  ReportSeries series;
  series.label = label;
  const double n = static_cast<double>(runs.size());
  for (std::size_t i = 0; i < m; ++i) {
    ReportRow row;
    row.milestone = runs.front()[i].milestone;
    row.dialogues = runs.front()[i].dialogues;
    double sum = 0.0, turns = 0.0;
    for (const auto& run : runs) {
      const MilestoneRecord& rec = run[i];
      if (rec.milestone != row.milestone || rec.dialogues != row.dialogues) {
        throw ConfigError("report: mismatched milestone grids at milestone " + std::to_string(row.milestone));
      }
      if (!rec.success_rate || !rec.mean_turns) {
        throw ConfigError("report: milestone " + std::to_string(rec.milestone) + " has no evaluation results");
      }
      sum += *rec.success_rate;
      turns += *rec.mean_turns;
    }
    row.mean_success = sum / n;
    row.mean_turns = turns / n;
    if (runs.size() > 1) {
      double ss = 0.0;
      for (const auto& run : runs) ss += std::pow(*run[i].success_rate - row.mean_success, 2);
      row.std_success = std::sqrt(ss / (n - 1.0));
    }
    series.rows.push_back(row);
  }
  return series;
}

std::string report_csv(const ReportSeries& series) {
  std::ostringstream out;
  out << "milestone,dialogues,mean_success,std_success,mean_turns\n";
  for (const auto& r : series.rows) {
    out << r.milestone << ',' << r.dialogues << ',' << num(r.mean_success) << ',' << num(r.std_success) << ','
        << num(r.mean_turns) << '\n';
  }
  return out.str();
}

std::string report_svg(const std::vector<ReportSeries>& series, const std::string& title) {
  constexpr double W = 640, H = 400, left = 60, right = 150, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  long max_d = 1;
  for (const auto& s : series) {
    for (const auto& r : s.rows) max_d = std::max(max_d, r.dialogues);
  }
  const auto sx = [&](double d) { return left + pw * d / static_cast<double>(max_d); };
  const auto sy = [&](double v) { return top + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0, y = sy(v);
    o << "<line x1=\"" << left << "\" y1=\"" << num(y) << "\" x2=\"" << left + pw << "\" y2=\"" << num(y)
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << left - 6 << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double d = max_d * i / 4.0;
    o << "<text x=\"" << num(sx(d)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
      << static_cast<long>(std::lround(d)) << "</text>\n";
  }
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">training dialogues</text>\n";
  o << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">success rate</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    if (s.rows.empty()) continue;
    std::ostringstream band, line;
    for (const auto& r : s.rows) band << num(sx(r.dialogues)) << ',' << num(sy(r.mean_success + r.std_success)) << ' ';
    for (auto it = s.rows.rbegin(); it != s.rows.rend(); ++it) {
      band << num(sx(it->dialogues)) << ',' << num(sy(it->mean_success - it->std_success)) << ' ';
    }
    for (const auto& r : s.rows) line << num(sx(r.dialogues)) << ',' << num(sy(r.mean_success)) << ' ';
    o << "<polygon points=\"" << band.str() << "\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    o << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    const double ly = top + 16 + 18.0 * static_cast<double>(k);
    o << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace compdial
