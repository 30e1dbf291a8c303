#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tenet/attacks.hpp"
#include "tenet/config.hpp"
#include "tenet/corruption.hpp"
#include "tenet/csv.hpp"
#include "tenet/dataset.hpp"
#include "tenet/evaluation.hpp"
#include "tenet/experiment.hpp"
#include "tenet/heatmap.hpp"
#include "tenet/pnm.hpp"
#include "tenet/report.hpp"

namespace fs = std::filesystem;
using namespace tenet;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kConfig = 3, kIo = 4, kNumeric = 5 };

int fail(const std::string& code, const std::string& message, int exit_code) {
  std::cerr << "error: " << nlohmann::json{{"code", code}, {"message", message}}.dump() << "\n";
  return exit_code;
}

struct DataArgs {
  std::string path;
  std::string format = "cifar10-binary";
  std::string split = "test";
  std::size_t limit = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--dataset", path, "Dataset file or directory")->required();
    cmd->add_option("--format", format, "cifar10-binary | mnist-idx | image-folder-subset");
    cmd->add_option("--split", split, "train | test (CIFAR-10 directories)");
    cmd->add_option("--limit", limit, "Use only the first N samples (0 = all)");
  }

  Dataset load() const {
    DatasetOptions opts;
    opts.split = split;
    if (limit != 0) opts.limit = limit;
    return load_dataset(path, parse_dataset_format(format), opts);
  }
};

struct EvalOutput {
  std::string csv;
  std::string run_id = "cli";

  void add_to(CLI::App* cmd) {
    cmd->add_option("--out", csv, "Append rows to this evaluation CSV");
    cmd->add_option("--run-id", run_id, "run_id column value");
  }

  void emit(const std::vector<EvalRow>& rows) const {
    std::cout << join_csv(eval_csv_header()) << "\n";
    for (const auto& r : rows) {
      std::cout << join_csv({r.run_id, r.model_checkpoint, r.condition, std::to_string(r.n_samples),
                             format_number(r.top1_error)})
                << "\n";
      if (!csv.empty()) append_eval_row(csv, r);
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TENET feature-inhibition training and robustness evaluation"};
  app.require_subcommand(1);

  // train
  std::string config_path;
  std::vector<std::string> overrides;
  bool verbose = false;
  std::uint64_t stop_after = 0;
  auto* train = app.add_subcommand("train", "Train one run per configured seed");
  train->add_option("--config", config_path, "INI config file")->required();
  train->add_option("--set", overrides, "Override a config key: section.key=value");
  train->add_flag("--verbose,-v", verbose, "Progress line per epoch");
  train->add_option("--stop-after-step", stop_after, "Stop after N steps (0 = never)");

  // eval
  std::string checkpoint;
  DataArgs data;
  EvalOutput output;
  std::uint64_t seed = 0;
  auto* eval = app.add_subcommand("eval", "Clean top-1 error of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  data.add_to(eval);
  output.add_to(eval);

  // attack
  std::string kind = "fgsm";
  std::string eps = "8/255";
  std::size_t steps = 1;
  std::string step_size = "2/255";
  bool no_random_start = false;
  auto* attack_cmd = app.add_subcommand("attack", "Top-1 error under FGSM or PGD");
  attack_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  attack_cmd->add_option("--kind", kind, "fgsm | pgd");
  attack_cmd->add_option("--eps", eps, "L-infinity budget, e.g. 8/255");
  attack_cmd->add_option("--steps", steps, "PGD steps");
  attack_cmd->add_option("--step-size", step_size, "PGD step size");
  attack_cmd->add_flag("--no-random-start", no_random_start, "Start PGD at the clean input");
  attack_cmd->add_option("--seed", seed, "Seed for the PGD random start");
  data.add_to(attack_cmd);
  output.add_to(attack_cmd);

  // corrupt-eval
  std::string suite = "all";
  auto* corrupt_cmd = app.add_subcommand("corrupt-eval", "Top-1 error per corruption and mCE");
  corrupt_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  corrupt_cmd->add_option("--suite", suite, "all, or kind[:severity] items separated by commas");
  corrupt_cmd->add_option("--seed", seed, "Corruption noise seed");
  data.add_to(corrupt_cmd);
  output.add_to(corrupt_cmd);

  // visualize
  std::string image_path;
  std::string out_dir;
  std::size_t groups = 6;
  std::size_t index = 0;
  auto* vis = app.add_subcommand("visualize", "Write Grad-CAM and group heatmaps");
  vis->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  auto* image_opt = vis->add_option("--image", image_path, "Input image (.ppm or .pgm)");
  auto* dataset_opt = vis->add_option("--dataset", data.path, "Take the image from a dataset");
  vis->add_option("--format", data.format, "Dataset format");
  vis->add_option("--split", data.split, "Dataset split");
  vis->add_option("--index", index, "Sample index in --dataset");
  vis->add_option("--out", out_dir, "Output directory")->required();
  vis->add_option("--groups", groups, "Number of channel groups");
  vis->add_option("--seed", seed, "Grouping seed");
  image_opt->excludes(dataset_opt);

  // report
  std::vector<std::string> run_dirs;
  std::string report_csv;
  auto* report_cmd = app.add_subcommand("report", "Mean and std across seeds per condition");
  report_cmd->add_option("runs", run_dirs, "Run directories or their parents")->required();
  report_cmd->add_option("--csv", report_csv, "Also write the summary as CSV");

  // make-synthetic
  std::string synth_out;
  std::size_t n_train = 5000;
  std::size_t n_test = 2000;
  auto* synth = app.add_subcommand("make-synthetic",
                                   "Write a procedural 10-class dataset in CIFAR-10 binary layout");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--train", n_train, "Training samples");
  synth->add_option("--test", n_test, "Test samples");
  synth->add_option("--seed", seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kUsage);
  }

  try {
    if (*train) {
      ConfigValues values = ConfigValues::from_file(config_path);
      for (const auto& o : overrides) values.apply_override(o);
      apply_environment(values);
      const ExperimentConfig config = build_config(values);
      TrainOptions opts;
      opts.verbose = verbose;
      if (stop_after != 0) opts.stop_after_step = stop_after;
      for (std::uint64_t s : config.seeds) {
        const TrainResult r = train_run(config, values, s, opts);
        std::cout << r.run_dir.string() << (r.completed ? " complete" : " stopped") << " steps="
                  << r.steps << "\n";
      }
    } else if (*eval || *attack_cmd || *corrupt_cmd) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      const Dataset ds = data.load();
      std::vector<EvalRow> rows;
      const auto row = [&](const Condition& c, const EvalMetrics& m) {
        rows.push_back({output.run_id, checkpoint, condition_label(c), m.n_samples, m.top1_error});
      };
      if (*eval) {
        row(std::monostate{}, evaluate(ck.model, ds));
      } else if (*attack_cmd) {
        AttackConfig a;
        a.kind = parse_attack_kind(kind);
        a.epsilon = static_cast<float>(parse_real(eps));
        a.steps = a.kind == AttackKind::Fgsm ? 1 : steps;
        a.step_size = static_cast<float>(parse_real(step_size));
        a.random_start = !no_random_start;
        a.validate();
        row(a, evaluate(ck.model, ds, a, seed));
      } else {
        const auto specs = parse_corruption_suite(suite);
        const auto results = corruption_eval(ck.model, ds, specs, seed);
        for (const auto& r : results) row(r.spec, r.metrics);
        output.emit(rows);
        std::cout << "mce," << format_number(mce(results)) << "\n";
        return kOk;
      }
      output.emit(rows);
    } else if (*vis) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      Tensor image;
      if (!image_path.empty()) {
        image = pnm_to_tensor(read_pnm(image_path));
      } else if (!data.path.empty()) {
        DatasetOptions opts;
        opts.split = data.split;
        const Dataset ds = load_dataset(data.path, parse_dataset_format(data.format), opts);
        if (index >= ds.size()) throw std::out_of_range("--index beyond dataset size");
        image = ds.images.slice(index);
      } else {
        return fail("usage", "visualize needs --image or --dataset", kUsage);
      }
      TenetConfig tc;
      tc.groups = groups;
      const HeatmapResult r = export_heatmap(ck.model, image, out_dir, tc, seed);
      for (const auto& f : r.files) std::cout << f.string() << "\n";
    } else if (*report_cmd) {
      std::vector<fs::path> paths(run_dirs.begin(), run_dirs.end());
      const Report r = build_report(paths);
      std::cout << r.to_text();
      if (!report_csv.empty()) {
        std::ofstream out(report_csv, std::ios::trunc);
        out << r.to_csv();
        if (!out) throw IoError("write failed: " + report_csv);
      }
    } else if (*synth) {
      fs::create_directories(synth_out);
      write_cifar10_binary(fs::path(synth_out) / "data_batch_1.bin", make_synthetic(n_train, seed));
      write_cifar10_binary(fs::path(synth_out) / "test_batch.bin",
                           make_synthetic(n_test, seed ^ 0x5EEDull));
      std::cout << synth_out << "\n";
    }
  } catch (const ConfigError& e) {
    return fail("config", e.what(), kConfig);
  } catch (const StepAborted& e) {
    return fail("non_finite", e.what(), kNumeric);
  } catch (const NonFiniteError& e) {
    return fail("non_finite", e.what(), kNumeric);
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e.what(), kUsage);
  } catch (const std::out_of_range& e) {
    return fail("out_of_range", e.what(), kUsage);
  } catch (const IoError& e) {
    return fail("io", e.what(), kIo);
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what(), kIo);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), kFailure);
  }
  return kOk;
}
