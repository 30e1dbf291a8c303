#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tenet/config.hpp"
#include "tenet/dataset.hpp"
#include "tenet/evaluation.hpp"

namespace tenet {

/// Environment variable that overrides run.output_root.
inline constexpr const char* kOutputRootEnv = "TENET_OUTPUT_ROOT";

/// Applies the output-root environment override, if set.
void apply_environment(ConfigValues& values);

struct RunFiles {
  std::filesystem::path dir;
  std::filesystem::path config;
  std::filesystem::path metrics;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  std::filesystem::path eval;
  std::filesystem::path predictions;
  std::filesystem::path diagnostic;
  std::filesystem::path complete_marker;

  explicit RunFiles(std::filesystem::path run_dir);
};

/// <output_root>/<name>/seed_<seed>
std::filesystem::path run_directory(const ExperimentConfig& config, std::uint64_t seed);

struct TrainOptions {
  /// Stop (as if interrupted) once this many global steps have run.
  std::optional<std::uint64_t> stop_after_step;
  /// Skip the final attack/corruption evaluation.
  bool skip_final_eval = false;
  /// Print one progress line per epoch to stderr.
  bool verbose = false;
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::uint64_t steps = 0;
  std::uint64_t epochs_done = 0;
  bool completed = false;
  bool resumed = false;
  std::vector<EvalRow> eval_rows;
};

struct Datasets {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Loads train/val/test as configured. `seed` drives the per-class subsample.
Datasets load_experiment_data(const ExperimentConfig& config, std::uint64_t seed);

/// Trains one seed into its run directory, resuming from checkpoint_last.bin
/// when a previous attempt with the same config was interrupted. Writes
/// config.ini, metrics.csv (one row per step, one per epoch), both
/// checkpoints, eval.csv, predictions.csv and finally the COMPLETE marker.
/// A non-finite step writes diagnostic.json and rethrows.
TrainResult train_run(const ExperimentConfig& config, const ConfigValues& values,
                      std::uint64_t seed, const TrainOptions& options = {});
TrainResult train_run(const ExperimentConfig& config, const ConfigValues& values,
                      const Datasets& data, std::uint64_t seed, const TrainOptions& options = {});

/// Columns of metrics.csv for a given number of importance columns.
std::vector<std::string> metrics_header(std::size_t groups);

/// Importance columns for a config: N_G, N_c (channel mode) or 1 (instance).
std::size_t importance_columns(const ExperimentConfig& config);

/// Clean, attack and corruption evaluation rows for a model.
std::vector<EvalRow> evaluate_all(const ConvNet& model, const Dataset& test,
                                  const ExperimentConfig& config, const std::string& run_id,
                                  const std::string& checkpoint, std::uint64_t seed,
                                  EvalMetrics* clean = nullptr);

}  // namespace tenet
