#include "tenet/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tenet/attacks.hpp"
#include "tenet/csv.hpp"
#include "tenet/random.hpp"

namespace fs = std::filesystem;

namespace tenet {

void apply_environment(ConfigValues& values) {
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
    values.set("run.output_root", root);
  }
}

RunFiles::RunFiles(fs::path run_dir)
    : dir(std::move(run_dir)),
      config(dir / "config.ini"),
      metrics(dir / "metrics.csv"),
      last_checkpoint(dir / "checkpoint_last.bin"),
      best_checkpoint(dir / "checkpoint_best.bin"),
      eval(dir / "eval.csv"),
      predictions(dir / "predictions.csv"),
      diagnostic(dir / "diagnostic.json"),
      complete_marker(dir / "COMPLETE") {}

fs::path run_directory(const ExperimentConfig& config, std::uint64_t seed) {
  return config.output_root / config.name / ("seed_" + std::to_string(seed));
}

std::vector<std::string> metrics_header(std::size_t groups) {
  std::vector<std::string> h = {"kind", "epoch"};
  for (auto& f : parse_csv_line(StepReport::csv_header(groups))) h.push_back(f);
  h.push_back("val_top1_error");
  return h;
}

std::size_t importance_columns(const ExperimentConfig& config) {
  if (config.method == Method::Baseline) return 0;
  switch (config.tenet.grouping_mode) {
    case GroupingMode::Group: return config.tenet.groups;
    case GroupingMode::Channel: return config.model.feature_shape()[0];
    case GroupingMode::Instance: return 1;
  }
  return 0;
}

Datasets load_experiment_data(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.train_path.empty()) throw ConfigError("data.train is not set");
  DatasetOptions train_opts;
  train_opts.split = "train";
  train_opts.samples_per_class = config.samples_per_class;
  train_opts.limit = config.train_limit;
  train_opts.seed = seed;
  Datasets d;
  Dataset full = load_dataset(config.train_path, config.data_format, train_opts);
  if (config.val_size > 0) {
    if (config.val_size >= full.size()) {
      throw ConfigError("data.val_size leaves no training samples");
    }
    const std::size_t keep = full.size() - config.val_size;
    Batch tr = full.range(0, keep);
    Batch va = full.range(keep, full.size());
    d.train = Dataset{std::move(tr.images), std::move(tr.labels), full.num_classes};
    d.val = Dataset{std::move(va.images), std::move(va.labels), full.num_classes};
  } else {
    d.train = std::move(full);
  }
  if (!config.test_path.empty()) {
    DatasetOptions test_opts;
    test_opts.split = "test";
    test_opts.limit = config.test_limit;
    d.test = load_dataset(config.test_path, config.data_format, test_opts);
  }
  if (d.val.size() == 0) d.val = d.test.size() != 0 ? d.test : d.train;
  if (d.train.image_shape() != config.model.input_shape()) {
    throw ConfigError("dataset images " + to_string(d.train.image_shape()) +
                      " do not match model input " + to_string(config.model.input_shape()));
  }
  if (d.train.num_classes > config.model.num_classes) {
    throw ConfigError("dataset has more classes than the model outputs");
  }
  return d;
}

std::vector<EvalRow> evaluate_all(const ConvNet& model, const Dataset& test,
                                  const ExperimentConfig& config, const std::string& run_id,
                                  const std::string& checkpoint, std::uint64_t seed,
                                  EvalMetrics* clean) {
  const Dataset data = config.eval_limit ? take_first(test, *config.eval_limit) : test;
  std::vector<EvalRow> rows;
  const auto add = [&](const Condition& cond, const EvalMetrics& m) {
    rows.push_back({run_id, checkpoint, condition_label(cond), m.n_samples, m.top1_error});
  };
  EvalMetrics m = evaluate(model, data, std::monostate{}, seed);
  add(std::monostate{}, m);
  if (clean != nullptr) *clean = m;
  for (std::size_t i = 0; i < config.attacks.size(); ++i) {
    add(config.attacks[i], evaluate(model, data, config.attacks[i], mix_seed(seed, {1, i})));
  }
  for (const CorruptionResult& r : corruption_eval(model, data, config.corruptions, mix_seed(seed, {2}))) {
    add(r.spec, r.metrics);
  }
  return rows;
}

namespace {

// Keeps the header plus the first `rows` data lines.
void truncate_metrics(const fs::path& path, std::uint64_t rows) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (lines.size() < rows + 1 && std::getline(in, line)) lines.push_back(line);
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw std::runtime_error("cannot rewrite " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string empty_fields(std::size_t n) { return std::string(n, ','); }

}  // namespace

TrainResult train_run(const ExperimentConfig& config, const ConfigValues& values,
                      std::uint64_t seed, const TrainOptions& options) {
  return train_run(config, values, load_experiment_data(config, seed), seed, options);
}

TrainResult train_run(const ExperimentConfig& config, const ConfigValues& values,
                      const Datasets& data, std::uint64_t seed, const TrainOptions& options) {
  const RunFiles files(run_directory(config, seed));
  TrainResult result;
  result.run_dir = files.dir;
  fs::create_directories(files.dir);

  // The stored config must match so that a resumed run stays reproducible
  // from its snapshot.
  ConfigValues effective = values;
  effective.set("run.seeds", std::to_string(seed));
  const std::string ini = effective.to_ini();
  ConvNet model = ConvNet::init(config.model, seed);
  TrainState state;
  if (fs::exists(files.config)) {
    if (read_text(files.config) != ini) {
      throw ConfigError(files.dir.string() + " holds a run with a different config");
    }
    if (fs::exists(files.complete_marker)) {
      result.completed = true;
      result.eval_rows = read_eval_rows(files.eval);
      return result;
    }
    if (fs::exists(files.last_checkpoint)) {
      Checkpoint ck = load_checkpoint(files.last_checkpoint);
      if (!ck.state) throw std::runtime_error(files.last_checkpoint.string() + " has no training state");
      model = std::move(ck.model);
      state = std::move(*ck.state);
      result.resumed = true;
    }
  } else {
    write_text(files.config, ini);
  }
  truncate_metrics(files.metrics, state.metrics_rows);
  fs::remove(files.diagnostic);

  const std::size_t groups = importance_columns(config);
  if (!fs::exists(files.metrics) || fs::file_size(files.metrics) == 0) {
    write_text(files.metrics, join_csv(metrics_header(groups)) + "\n");
  }
  std::ofstream metrics(files.metrics, std::ios::app);
  const std::size_t n = data.train.size();
  if (n == 0) throw std::runtime_error("training set is empty");

  for (std::uint64_t epoch = state.epoch; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(seed, {epoch}));
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      if (options.stop_after_step && state.step >= *options.stop_after_step) {
        result.steps = state.step;
        result.epochs_done = epoch;
        return result;
      }
      const std::size_t end = std::min(n, begin + config.batch_size);
      Batch batch = data.train.batch(std::span(order).subspan(begin, end - begin));
      if (config.adversarial_training) {
        batch.images = attack(model, batch.images, batch.labels, config.adversarial,
                              mix_seed(seed, {state.step, 1}));
      }
      StepReport report;
      try {
        report = config.method == Method::Baseline
                     ? baseline_step(model, batch, config.sgd, state.optimizer, state.step)
                     : tenet_step(model, batch, config.tenet, config.sgd, state.optimizer, seed,
                                  state.step);
      } catch (const StepAborted& e) {
        const nlohmann::json diag = {
            {"error", e.what()},
            {"epoch", epoch},
            {"step", state.step},
            {"partial_report", e.report().csv_row(groups)},
            {"partial_report_header", StepReport::csv_header(groups)},
        };
        write_text(files.diagnostic, diag.dump(2) + "\n");
        throw;
      }
      metrics << "step," << epoch << ',' << report.csv_row(groups) << ",\n";
      ++state.metrics_rows;
      ++state.step;
    }

    const EvalMetrics val = evaluate(model, data.val);
    metrics << "eval," << epoch << ',' << state.step << empty_fields(5 + groups) << ','
            << format_number(val.top1_error) << '\n';
    metrics.flush();
    if (!metrics) throw IoError("write failed: " + files.metrics.string());
    ++state.metrics_rows;
    state.epoch = epoch + 1;
    if (options.verbose) {
      std::cerr << config.name << " seed " << seed << " epoch " << state.epoch << "/"
                << config.epochs << " val_top1_error " << val.top1_error << "\n";
    }
    if (val.top1_error < state.best_val_error || !fs::exists(files.best_checkpoint)) {
      state.best_val_error = std::min(state.best_val_error, val.top1_error);
      save_checkpoint(files.best_checkpoint, model, &state);
    }
    save_checkpoint(files.last_checkpoint, model, &state);
  }
  if (!fs::exists(files.last_checkpoint)) save_checkpoint(files.last_checkpoint, model, &state);
  metrics.close();

  result.steps = state.step;
  result.epochs_done = state.epoch;
  if (!options.skip_final_eval) {
    const Dataset& test = data.test.size() != 0 ? data.test : data.val;
    const std::string run_id = config.name + "/seed_" + std::to_string(seed);
    EvalMetrics clean;
    result.eval_rows = evaluate_all(model, test, config, run_id, files.last_checkpoint.string(),
                                    seed, &clean);
    fs::remove(files.eval);
    for (const auto& row : result.eval_rows) append_eval_row(files.eval, row);
    std::ofstream pred(files.predictions, std::ios::trunc);
    pred << "index,label,prediction\n";
    const Dataset eval_set = config.eval_limit ? take_first(test, *config.eval_limit) : test;
    for (std::size_t i = 0; i < clean.predictions.size(); ++i) {
      pred << i << ',' << eval_set.labels[i] << ',' << clean.predictions[i] << '\n';
    }
    if (!pred) throw IoError("write failed: " + files.predictions.string());
  }
  write_text(files.complete_marker, "steps=" + std::to_string(state.step) + "\n");
  result.completed = true;
  return result;
}

}  // namespace tenet
