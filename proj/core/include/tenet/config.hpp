#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tenet/attacks.hpp"
#include "tenet/convnet.hpp"
#include "tenet/corruption.hpp"
#include "tenet/dataset.hpp"
#include "tenet/optim.hpp"
#include "tenet/tenet.hpp"

namespace tenet {

/// Bad config file, unknown key, or a value that does not parse.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr int kConfigSchema = 1;

enum class Method { Tenet, Baseline };

struct ExperimentConfig {
  std::string name = "run";
  std::vector<std::uint64_t> seeds = {0};
  std::filesystem::path output_root = "runs";
  Method method = Method::Tenet;

  DatasetFormat data_format = DatasetFormat::Cifar10Binary;
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::optional<std::size_t> train_limit;
  std::optional<std::size_t> test_limit;
  std::optional<std::size_t> samples_per_class;
  /// Samples held out of the training set for per-epoch validation. With 0
  /// the test set (or its first eval_limit samples) is used instead.
  std::size_t val_size = 0;

  ModelSpec model = ModelSpec::desk_default();
  TenetConfig tenet;
  SgdConfig sgd;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;

  std::vector<AttackConfig> attacks;
  std::vector<CorruptionSpec> corruptions;
  /// Caps the test samples used by the final attack and corruption evaluation.
  std::optional<std::size_t> eval_limit;
  /// Replace every training batch by its PGD adversarial version.
  bool adversarial_training = false;
  AttackConfig adversarial;
};

/// Flat "section.key" -> text view of a config, filled with defaults for
/// every registered key.
class ConfigValues {
 public:
  ConfigValues();

  /// Sets a registered key; throws ConfigError for an unknown key.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Applies "key=value".
  void apply_override(const std::string& assignment);

  /// Reads an INI file. Every key must be registered and `schema` must match.
  static ConfigValues from_file(const std::filesystem::path& path);
  static ConfigValues from_string(const std::string& text);

  /// INI text with a schema line and one section per key prefix.
  std::string to_ini() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Registered keys with their defaults, in dump order.
const std::vector<std::pair<std::string, std::string>>& config_keys();

/// Parses and validates every value. Throws ConfigError naming the key.
ExperimentConfig build_config(const ConfigValues& values);

/// Reads "8/255" style fractions as well as plain decimals.
double parse_real(const std::string& text);

/// "kind:eps:steps" items separated by commas; FGSM ignores steps.
std::vector<AttackConfig> parse_attack_list(const std::string& text, float pgd_step_size,
                                            bool random_start);

}  // namespace tenet
