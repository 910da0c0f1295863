#include "madview/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "madview/config.hpp"
#include "madview/rundir.hpp"

namespace madview {

namespace fs = std::filesystem;

namespace {

struct GroupKey {
  std::string hash_hex;
  std::string label;
  bool operator<(const GroupKey& o) const { return hash_hex < o.hash_hex; }
};

struct SeriesPoint {
  double mean = 0, lo = 0, hi = 0;
  int n = 0;
};

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// subset -> step -> per-run success rates
using CurveData = std::map<std::string, std::map<long, std::vector<double>>>;

SeriesPoint aggregate(const std::vector<double>& values) {
  SeriesPoint p;
  p.n = static_cast<int>(values.size());
  double sum = 0;
  for (double v : values) sum += v;
  p.mean = sum / static_cast<double>(p.n);
  if (p.n > 1) {
    double ss = 0;
    for (double v : values) ss += (v - p.mean) * (v - p.mean);
    const double sd = std::sqrt(ss / static_cast<double>(p.n - 1));
    const double half = 1.96 * sd / std::sqrt(static_cast<double>(p.n));
    p.lo = p.mean - half;
    p.hi = p.mean + half;
  } else {
    p.lo = p.hi = p.mean;
  }
  return p;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

void write_svg_plot(const fs::path& path, const std::string& title,
                    const std::vector<std::pair<GroupKey,
                                                std::map<long, SeriesPoint>>>&
                        series) {
  const int width = 640, height = 420;
  const int ml = 60, mr = 16, mt = 36, mb = 46;
  const double pw = width - ml - mr, ph = height - mt - mb;
  long max_step = 1;
  for (const auto& [key, pts] : series)
    for (const auto& [step, p] : pts) max_step = std::max(max_step, step);
  auto sx = [&](long step) {
    return ml + pw * static_cast<double>(step) / static_cast<double>(max_step);
  };
  auto sy = [&](double v) { return mt + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ofstream svg(path);
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << width / 2 << "' y='20' text-anchor='middle' "
      << "font-family='sans-serif' font-size='14'>" << title << "</text>\n";
  // axes
  svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='"
      << mt + ph << "' stroke='black'/>\n";
  svg << "<line x1='" << ml << "' y1='" << mt + ph << "' x2='" << ml + pw
      << "' y2='" << mt + ph << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    svg << "<line x1='" << ml - 4 << "' y1='" << sy(v) << "' x2='" << ml
        << "' y2='" << sy(v) << "' stroke='black'/>\n";
    svg << "<text x='" << ml - 8 << "' y='" << sy(v) + 4
        << "' text-anchor='end' font-family='sans-serif' font-size='11'>" << v
        << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const long step = max_step * i / 4;
    svg << "<text x='" << sx(step) << "' y='" << mt + ph + 18
        << "' text-anchor='middle' font-family='sans-serif' font-size='11'>"
        << step << "</text>\n";
  }
  svg << "<text x='" << ml + pw / 2 << "' y='" << height - 8
      << "' text-anchor='middle' font-family='sans-serif' font-size='12'>"
      << "environment steps</text>\n";
  svg << "<text x='16' y='" << mt + ph / 2
      << "' text-anchor='middle' font-family='sans-serif' font-size='12' "
      << "transform='rotate(-90 16 " << mt + ph / 2
      << ")'>success rate</text>\n";

  int color_idx = 0;
  for (const auto& [key, pts] : series) {
    const char* color = kPalette[color_idx % 8];
    // confidence band
    if (pts.size() > 1) {
      std::string band = "<polygon fill='" + std::string(color) +
                         "' fill-opacity='0.15' stroke='none' points='";
      for (const auto& [step, p] : pts)
        band += fmt(sx(step)) + "," + fmt(sy(p.hi)) + " ";
      for (auto it = pts.rbegin(); it != pts.rend(); ++it)
        band += fmt(sx(it->first)) + "," + fmt(sy(it->second.lo)) + " ";
      band += "'/>";
      svg << band << "\n";
    }
    std::string line = "<polyline fill='none' stroke='" + std::string(color) +
                       "' stroke-width='2' points='";
    for (const auto& [step, p] : pts)
      line += fmt(sx(step)) + "," + fmt(sy(p.mean)) + " ";
    line += "'/>";
    svg << line << "\n";
    svg << "<text x='" << ml + 10 << "' y='" << mt + 16 + 16 * color_idx
        << "' font-family='sans-serif' font-size='11' fill='" << color << "'>"
        << key.label << "</text>\n";
    ++color_idx;
  }
  svg << "</svg>\n";
}

}  // namespace

void generate_report(const ReportOptions& options, std::ostream& out) {
  if (options.run_dirs.empty())
    throw ValidationError("report requires at least one run directory");

  std::map<GroupKey, CurveData> groups;
  std::map<std::string, int> seeds_per_group;

  for (const std::string& dir : options.run_dirs) {
    RunDirectory rd{fs::path(dir)};
    const RunManifest manifest = rd.read_manifest();
    GroupKey key;
    key.hash_hex = hex64(config_group_hash(manifest.config));
    key.label = to_string(manifest.config.training_mode) + "/" +
                to_string(manifest.config.merge_strategy) + " [" +
                key.hash_hex.substr(0, 8) + "]";
    seeds_per_group[key.hash_hex]++;

    std::ifstream csv(rd.eval_csv());
    if (!csv)
      throw ValidationError("run dir has no eval.csv: " + dir);
    std::string line;
    std::getline(csv, line);  // header
    while (std::getline(csv, line)) {
      if (line.empty()) continue;
      auto fields = split(line, ',');
      if (fields.size() < 4) continue;
      const long step = std::stol(fields[0]);
      const std::string& subset = fields[1];
      const double success = std::stod(fields[2]);
      groups[key][subset][step].push_back(success);
    }
  }

  fs::create_directories(options.out_dir);
  std::ofstream summary(fs::path(options.out_dir) / "summary.csv");
  summary << "group,config_hash,subset,env_step,mean_success,ci_lo,ci_hi,"
             "seeds\n";

  std::set<std::string> subsets;
  for (const auto& [key, curves] : groups)
    for (const auto& [subset, _] : curves) subsets.insert(subset);

  for (const std::string& subset : subsets) {
    std::vector<std::pair<GroupKey, std::map<long, SeriesPoint>>> series;
    for (const auto& [key, curves] : groups) {
      auto it = curves.find(subset);
      if (it == curves.end()) continue;
      std::map<long, SeriesPoint> pts;
      for (const auto& [step, values] : it->second) {
        const SeriesPoint p = aggregate(values);
        pts[step] = p;
        summary << key.label << ',' << key.hash_hex << ',' << subset << ','
                << step << ',' << fmt(p.mean) << ',' << fmt(p.lo) << ','
                << fmt(p.hi) << ',' << p.n << "\n";
      }
      series.emplace_back(key, std::move(pts));
    }
    write_svg_plot(fs::path(options.out_dir) / ("success_" + subset + ".svg"),
                   "success rate (" + subset + ")", series);
  }

  // final-step table
  out << "group | subset | final mean success | seeds\n";
  for (const auto& [key, curves] : groups) {
    for (const auto& [subset, steps] : curves) {
      if (steps.empty()) continue;
      const auto& [last_step, values] = *steps.rbegin();
      const SeriesPoint p = aggregate(values);
      out << key.label << " | " << subset << " | " << fmt(p.mean) << " (step "
          << last_step << ") | " << p.n << "\n";
    }
  }
}

}  // namespace madview
