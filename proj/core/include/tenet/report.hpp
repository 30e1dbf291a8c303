#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tenet {

struct ReportRow {
  std::string name;
  /// An eval.csv condition, or "mce" for the mean over corrupt:* rows.
  std::string condition;
  std::size_t runs = 0;
  double mean = 0.0;
  /// Population standard deviation across runs.
  double std = 0.0;
};

struct RunStatus {
  std::filesystem::path dir;
  std::string name;
  bool complete = false;
};

struct Report {
  std::vector<ReportRow> rows;
  std::vector<RunStatus> runs;

  std::string to_text() const;
  std::string to_csv() const;
};

/// Accepts run directories (holding config.ini) or any directory above them.
/// Complete runs are aggregated per (run name, condition); incomplete runs
/// are listed with complete = false and left out of the statistics. Rows
/// are ordered by name, then clean, attacks, corruptions, mce.
Report build_report(const std::vector<std::filesystem::path>& inputs);

/// Population mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

}  // namespace tenet
