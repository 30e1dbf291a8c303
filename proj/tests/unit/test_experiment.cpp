#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "tenet/config.hpp"
#include "tenet/csv.hpp"
#include "tenet/dataset.hpp"
#include "tenet/experiment.hpp"
#include "tenet/report.hpp"

using namespace tenet;
using testing::TempDir;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Small synthetic train/test files plus config values that train in well
/// under a second per epoch.
struct Fixture {
  TempDir dir{"exp"};
  ConfigValues values;

  explicit Fixture(const std::string& method = "tenet") {
    write_cifar10_binary(dir / "train.bin", make_synthetic(48, 1));
    write_cifar10_binary(dir / "test.bin", make_synthetic(20, 2));
    values.set("run.name", "small");
    values.set("run.method", method);
    values.set("run.output_root", (dir / "runs").string());
    values.set("data.train", (dir / "train.bin").string());
    values.set("data.test", (dir / "test.bin").string());
    values.set("data.val_size", "8");
    values.set("model.spec", "input=3x32x32;stages=6:3:1:1:pool,8:3:1:1:pool;split=2;classes=10");
    values.set("tenet.groups", "3");
    values.set("tenet.cfg_restarts", "2");
    values.set("optim.epochs", "2");
    values.set("optim.batch_size", "16");
    values.set("robustness.attacks", "fgsm:8/255,pgd:8/255:2");
    values.set("robustness.corruptions", "contrast:1,contrast:5,gaussian_noise:3");
  }

  ExperimentConfig config() const { return build_config(values); }
};

std::vector<float> flat_params(const ConvNet& net) {
  std::vector<float> out;
  for (const auto& p : net.params()) out.insert(out.end(), p.value.data().begin(), p.value.data().end());
  return out;
}

/// Bitwise comparison so that NaN or -0 differences are not hidden.
bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

void fake_run(const fs::path& dir, const std::string& name,
              const std::vector<std::pair<std::string, double>>& rows, bool complete = true) {
  fs::create_directories(dir);
  ConfigValues v;
  v.set("run.name", name);
  std::ofstream(dir / "config.ini") << v.to_ini();
  for (const auto& [cond, err] : rows) append_eval_row(dir / "eval.csv", {name, "ck", cond, 10, err});
  if (complete) std::ofstream(dir / "COMPLETE") << "steps=1\n";
}

}  // namespace

TEST_SUITE("experiment") {
  TEST_CASE("a run writes every artefact with consistent contents") {
    Fixture f;
    const ExperimentConfig c = f.config();
    const TrainResult r = train_run(c, f.values, 0);
    CHECK(r.completed);
    CHECK_FALSE(r.resumed);
    const RunFiles files(r.run_dir);
    CHECK(r.run_dir == f.dir / "runs" / "small" / "seed_0");
    for (const auto& p : {files.config, files.metrics, files.last_checkpoint, files.best_checkpoint, files.eval,
                          files.predictions, files.complete_marker}) {
      CHECK(fs::exists(p));
    }
    // 40 training samples at batch 16 is 3 steps per epoch.
    CHECK(r.steps == 6);
    const CsvTable metrics = read_csv(files.metrics);
    CHECK(metrics.header == metrics_header(3));
    CHECK(metrics.rows.size() == r.steps + c.epochs);
    CHECK(metrics.rows[3][0] == "eval");

    // eval.csv: clean, two attacks, three corruptions.
    const auto rows = read_eval_rows(files.eval);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].condition == "clean");
    CHECK(rows[1].condition == "attack:fgsm:0.0313725508749485:1");
    CHECK(rows[5].condition == "corrupt:gaussian_noise:3");
    CHECK(rows[0].n_samples == 20);

    // Clean error recomputed from predictions.csv.
    const CsvTable pred = read_csv(files.predictions);
    REQUIRE(pred.rows.size() == 20);
    std::size_t wrong = 0;
    for (const auto& row : pred.rows) wrong += row[1] != row[2];
    CHECK(static_cast<double>(wrong) / 20.0 == rows[0].top1_error);

    // The stored config reproduces the run's configuration.
    const ConfigValues stored = ConfigValues::from_file(files.config);
    CHECK(stored.get("tenet.groups") == "3");
    CHECK(stored.get("run.seeds") == "0");
  }

  TEST_CASE("interrupted then resumed matches an uninterrupted run bitwise") {
    Fixture a, b;
    const ExperimentConfig ca = a.config(), cb = b.config();
    const TrainResult full = train_run(ca, a.values, 3);

    TrainOptions stop;
    stop.stop_after_step = 4;  // part way through the second epoch
    const TrainResult partial = train_run(cb, b.values, 3, stop);
    CHECK_FALSE(partial.completed);
    CHECK(partial.steps == 4);
    CHECK_FALSE(fs::exists(RunFiles(partial.run_dir).complete_marker));
    const TrainResult resumed = train_run(cb, b.values, 3);
    CHECK(resumed.resumed);
    CHECK(resumed.completed);

    const RunFiles fa(full.run_dir), fb(resumed.run_dir);
    CHECK(same_bits(flat_params(load_checkpoint(fa.last_checkpoint).model),
                    flat_params(load_checkpoint(fb.last_checkpoint).model)));
    CHECK(slurp(fa.metrics) == slurp(fb.metrics));
    CHECK(slurp(fa.predictions) == slurp(fb.predictions));
    const auto ea = read_eval_rows(fa.eval), eb = read_eval_rows(fb.eval);
    REQUIRE(ea.size() == eb.size());
    for (std::size_t i = 0; i < ea.size(); ++i) CHECK(ea[i].top1_error == eb[i].top1_error);

    // A completed run is not retrained.
    const TrainResult again = train_run(cb, b.values, 3);
    CHECK(again.completed);
    CHECK(again.eval_rows.size() == eb.size());
  }

  TEST_CASE("zero alpha and mu reproduce the baseline bitwise") {
    Fixture t("tenet"), base("baseline");
    t.values.set("tenet.alpha", "0");
    t.values.set("tenet.mu", "0");
    t.values.set("robustness.attacks", "");
    t.values.set("robustness.corruptions", "");
    base.values.set("robustness.attacks", "");
    base.values.set("robustness.corruptions", "");
    const TrainResult rt = train_run(t.config(), t.values, 1);
    const TrainResult rb = train_run(base.config(), base.values, 1);
    CHECK(same_bits(flat_params(load_checkpoint(RunFiles(rt.run_dir).last_checkpoint).model),
                    flat_params(load_checkpoint(RunFiles(rb.run_dir).last_checkpoint).model)));
    CHECK(slurp(RunFiles(rt.run_dir).predictions) == slurp(RunFiles(rb.run_dir).predictions));
  }

  TEST_CASE("a different config in an existing run directory is refused") {
    Fixture f;
    TrainOptions stop;
    stop.stop_after_step = 1;
    train_run(f.config(), f.values, 0, stop);
    f.values.set("optim.lr", "0.02");
    CHECK_THROWS_AS(train_run(f.config(), f.values, 0), ConfigError);
  }

  TEST_CASE("a non-finite step leaves a diagnostic and aborts") {
    Fixture f;
    f.values.set("optim.lr", "1e30");
    f.values.set("optim.momentum", "0");
    f.values.set("optim.weight_decay", "0");
    CHECK_THROWS_AS(train_run(f.config(), f.values, 0), StepAborted);
    const RunFiles files(run_directory(f.config(), 0));
    REQUIRE(fs::exists(files.diagnostic));
    const auto diag = nlohmann::json::parse(slurp(files.diagnostic));
    CHECK(diag.contains("step"));
    CHECK(diag["error"].get<std::string>().find("step") != std::string::npos);
    CHECK_FALSE(fs::exists(files.complete_marker));
  }

  TEST_CASE("data loading and validation split") {
    Fixture f;
    const Datasets d = load_experiment_data(f.config(), 0);
    CHECK(d.train.size() == 40);
    CHECK(d.val.size() == 8);
    CHECK(d.test.size() == 20);
    f.values.set("data.val_size", "0");
    const Datasets no_val = load_experiment_data(f.config(), 0);
    CHECK(bitwise_equal(no_val.val.images, no_val.test.images));
    f.values.set("data.val_size", "48");
    CHECK_THROWS_AS(load_experiment_data(f.config(), 0), ConfigError);
    f.values.set("data.val_size", "0");
    f.values.set("model.spec", "input=1x28x28;stages=4:3:1:1;split=1;classes=10");
    CHECK_THROWS_AS(load_experiment_data(f.config(), 0), ConfigError);
  }

  TEST_CASE("importance columns follow the grouping mode") {
    Fixture f;
    CHECK(importance_columns(f.config()) == 3);
    f.values.set("tenet.grouping_mode", "channel");
    CHECK(importance_columns(f.config()) == 8);
    f.values.set("tenet.grouping_mode", "instance");
    CHECK(importance_columns(f.config()) == 1);
    f.values.set("run.method", "baseline");
    CHECK(importance_columns(f.config()) == 0);
  }

  TEST_CASE("output root environment override") {
    ConfigValues v;
    ::setenv(kOutputRootEnv, "/tmp/elsewhere", 1);
    apply_environment(v);
    ::unsetenv(kOutputRootEnv);
    CHECK(v.get("run.output_root") == "/tmp/elsewhere");
    ConfigValues w;
    apply_environment(w);
    CHECK(w.get("run.output_root") == "runs");
  }
}

TEST_SUITE("report") {
  TEST_CASE("population mean and standard deviation") {
    const auto [m1, s1] = mean_std({0.25});
    CHECK(m1 == 0.25);
    CHECK(s1 == 0.0);
    const auto [m, s] = mean_std({0.1, 0.2, 0.3});
    CHECK(m == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(s == doctest::Approx(std::sqrt(0.02 / 3.0)).epsilon(1e-12));
    CHECK(s == doctest::Approx(0.0816).epsilon(1e-3));
    CHECK_THROWS(mean_std({}));
  }

  TEST_CASE("aggregates seeds, orders conditions, and adds mce") {
    TempDir dir("report");
    fake_run(dir / "a" / "seed_0", "a", {{"corrupt:contrast:1", 0.5}, {"clean", 0.1}, {"attack:fgsm:0.1:1", 0.7},
                                         {"corrupt:contrast:2", 0.3}});
    fake_run(dir / "a" / "seed_1", "a", {{"corrupt:contrast:1", 0.5}, {"clean", 0.2}, {"attack:fgsm:0.1:1", 0.7},
                                         {"corrupt:contrast:2", 0.5}});
    fake_run(dir / "a" / "seed_2", "a", {{"clean", 0.3}, {"corrupt:contrast:1", 0.5}, {"attack:fgsm:0.1:1", 0.7},
                                         {"corrupt:contrast:2", 0.7}});
    fake_run(dir / "a" / "seed_3", "a", {{"clean", 0.9}}, false);
    fake_run(dir / "b" / "seed_0", "b", {{"clean", 0.4}});
    const Report r = build_report({dir.path()});
    REQUIRE(r.rows.size() == 6);
    CHECK(r.rows[0].name == "a");
    CHECK(r.rows[0].condition == "clean");
    CHECK(r.rows[0].runs == 3);
    CHECK(r.rows[0].mean == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(r.rows[0].std == doctest::Approx(0.0816497).epsilon(1e-5));
    CHECK(r.rows[1].condition == "attack:fgsm:0.1:1");
    CHECK(r.rows[1].std == doctest::Approx(0.0).scale(1.0));
    CHECK(r.rows[2].condition == "corrupt:contrast:1");
    CHECK(r.rows[3].condition == "corrupt:contrast:2");
    CHECK(r.rows[4].condition == "mce");
    // Per-run mce 0.4, 0.5, 0.6.
    CHECK(r.rows[4].mean == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r.rows[5].name == "b");
    CHECK(r.rows[5].std == 0.0);

    std::size_t incomplete = 0;
    for (const auto& run : r.runs) incomplete += !run.complete;
    CHECK(incomplete == 1);
    CHECK(r.to_text().find("INCOMPLETE") != std::string::npos);
    CHECK(r.to_csv().rfind("name,condition,runs,mean_top1_error,std_top1_error\n", 0) == 0);
    CHECK_THROWS(build_report({dir / "missing"}));
  }

  TEST_CASE("report from real runs") {
    Fixture f;
    f.values.set("optim.epochs", "1");
    f.values.set("robustness.attacks", "");
    f.values.set("robustness.corruptions", "contrast:5");
    const ExperimentConfig c = f.config();
    train_run(c, f.values, 0);
    train_run(c, f.values, 1);
    const Report r = build_report({f.dir / "runs" / "small"});
    REQUIRE(r.rows.size() == 3);
    CHECK(r.rows[0].runs == 2);
    CHECK(r.rows[2].condition == "mce");
    CHECK(r.rows[2].mean == r.rows[1].mean);
  }
}
