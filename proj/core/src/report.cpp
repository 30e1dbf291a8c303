#include "tenet/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tenet/config.hpp"
#include "tenet/csv.hpp"
#include "tenet/evaluation.hpp"
#include "tenet/experiment.hpp"

namespace fs = std::filesystem;

namespace tenet {

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean_std: no values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::sqrt(var)};
}

namespace {

void collect(const fs::path& p, std::set<fs::path>& out) {
  if (!fs::is_directory(p)) throw std::runtime_error("not a directory: " + p.string());
  if (fs::exists(p / "config.ini")) {
    out.insert(fs::weakly_canonical(p));
    return;
  }
  for (const auto& entry : fs::directory_iterator(p)) {
    if (entry.is_directory()) collect(entry.path(), out);
  }
}

int condition_rank(const std::string& c) {
  if (c == "clean") return 0;
  if (c.rfind("attack:", 0) == 0) return 1;
  if (c.rfind("corrupt:", 0) == 0) return 2;
  return 3;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

Report build_report(const std::vector<fs::path>& inputs) {
  std::set<fs::path> dirs;
  for (const auto& p : inputs) collect(p, dirs);
  if (dirs.empty()) throw std::runtime_error("no run directories found");

  Report report;
  // name -> condition -> per-run errors
  std::map<std::string, std::map<std::string, std::vector<double>>> cells;
  std::map<std::string, std::vector<std::string>> order;
  for (const fs::path& dir : dirs) {
    const RunFiles files(dir);
    const std::string name = ConfigValues::from_file(files.config).get("run.name");
    RunStatus status{dir, name, fs::exists(files.complete_marker) && fs::exists(files.eval)};
    report.runs.push_back(status);
    if (!status.complete) continue;
    std::vector<double> corrupt;
    for (const EvalRow& row : read_eval_rows(files.eval)) {
      auto& seen = order[name];
      if (std::find(seen.begin(), seen.end(), row.condition) == seen.end()) {
        seen.push_back(row.condition);
      }
      cells[name][row.condition].push_back(row.top1_error);
      if (row.condition.rfind("corrupt:", 0) == 0) corrupt.push_back(row.top1_error);
    }
    if (!corrupt.empty()) {
      cells[name]["mce"].push_back(mce(corrupt));
      auto& seen = order[name];
      if (std::find(seen.begin(), seen.end(), "mce") == seen.end()) seen.push_back("mce");
    }
  }
  for (auto& [name, conditions] : order) {
    std::stable_sort(conditions.begin(), conditions.end(), [](const auto& a, const auto& b) {
      return condition_rank(a) < condition_rank(b);
    });
    for (const auto& c : conditions) {
      const auto& values = cells[name][c];
      const auto [m, s] = mean_std(values);
      report.rows.push_back({name, c, values.size(), m, s});
    }
  }
  return report;
}

std::string Report::to_text() const {
  std::ostringstream out;
  std::size_t width = 9;
  for (const auto& r : rows) width = std::max(width, r.name.size() + r.condition.size() + 3);
  for (const auto& r : rows) {
    std::string label = r.name + "  " + r.condition;
    label.resize(width, ' ');
    out << label << ' ' << fmt(r.mean) << " +- " << fmt(r.std) << "  (n=" << r.runs << ")\n";
  }
  for (const auto& run : runs) {
    if (!run.complete) out << "INCOMPLETE  " << run.name << "  " << run.dir.string() << "\n";
  }
  return out.str();
}

std::string Report::to_csv() const {
  std::ostringstream out;
  out << "name,condition,runs,mean_top1_error,std_top1_error\n";
  for (const auto& r : rows) {
    out << join_csv({r.name, r.condition, std::to_string(r.runs), format_number(r.mean),
                     format_number(r.std)})
        << '\n';
  }
  for (const auto& run : runs) {
    if (!run.complete) out << join_csv({run.name, "INCOMPLETE:" + run.dir.string(), "0", "", ""}) << '\n';
  }
  return out.str();
}

}  // namespace tenet
