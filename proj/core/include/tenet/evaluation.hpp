#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tenet/attacks.hpp"
#include "tenet/convnet.hpp"
#include "tenet/corruption.hpp"
#include "tenet/dataset.hpp"

namespace tenet {

/// What the model is evaluated on: clean data, an attack, or a corruption.
using Condition = std::variant<std::monostate, AttackConfig, CorruptionSpec>;

/// clean | attack:<kind>:<eps>:<steps> | corrupt:<kind>:<severity>
std::string condition_label(const Condition& condition);

struct EvalMetrics {
  std::size_t n_samples = 0;
  double top1_error = 0.0;
  std::vector<double> per_class_error;
  std::vector<std::size_t> per_class_count;
  std::vector<int> predictions;
};

/// Top-1 error under `condition`. Corruption noise for sample i is seeded
/// from (seed, i); attack randomness from (seed, batch index).
/// Throws std::invalid_argument on an empty dataset.
EvalMetrics evaluate(const ConvNet& model, const Dataset& data, const Condition& condition = {},
                     std::uint64_t seed = 0, std::size_t batch_size = 250);

struct CorruptionResult {
  CorruptionSpec spec;
  EvalMetrics metrics;
};

/// "all" for every kind and severity, or a comma list of "kind" (all
/// severities) and "kind:severity" items.
std::vector<CorruptionSpec> parse_corruption_suite(const std::string& text);

std::vector<CorruptionResult> corruption_eval(const ConvNet& model, const Dataset& data,
                                              std::span<const CorruptionSpec> suite,
                                              std::uint64_t seed = 0);

/// Plain mean of the per-cell errors, in order.
double mce(std::span<const double> errors);
double mce(std::span<const CorruptionResult> results);

struct EvalRow {
  std::string run_id;
  std::string model_checkpoint;
  std::string condition;
  std::size_t n_samples = 0;
  double top1_error = 0.0;
};

const std::vector<std::string>& eval_csv_header();
void append_eval_row(const std::filesystem::path& path, const EvalRow& row);
std::vector<EvalRow> read_eval_rows(const std::filesystem::path& path);

}  // namespace tenet
