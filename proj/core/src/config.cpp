#include "tenet/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tenet/csv.hpp"
#include "tenet/evaluation.hpp"

namespace tenet {

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"run.name", "run"},
      {"run.seeds", "0"},
      {"run.output_root", "runs"},
      {"run.method", "tenet"},
      {"data.format", "cifar10-binary"},
      {"data.train", ""},
      {"data.test", ""},
      {"data.train_limit", ""},
      {"data.test_limit", ""},
      {"data.samples_per_class", ""},
      {"data.val_size", "0"},
      {"model.spec", to_string(ModelSpec::desk_default())},
      {"tenet.groups", "6"},
      {"tenet.alpha", "0.1"},
      {"tenet.mu", "0.1"},
      {"tenet.cfg_restarts", "4"},
      {"tenet.cfg_max_iters", "20"},
      {"tenet.mask_mode", "rrf"},
      {"tenet.grouping_mode", "group"},
      {"tenet.detach_rm", "true"},
      {"tenet.binary_threshold", ""},
      {"tenet.ortho_reduction", "group_mean"},
      {"optim.lr", "0.01"},
      {"optim.momentum", "0.9"},
      {"optim.weight_decay", "0.0005"},
      {"optim.max_grad_norm", "0"},
      {"optim.epochs", "20"},
      {"optim.batch_size", "64"},
      {"robustness.attacks", "fgsm:8/255:1,pgd:8/255:7"},
      {"robustness.pgd_step_size", "2/255"},
      {"robustness.pgd_random_start", "true"},
      {"robustness.corruptions", "all"},
      {"robustness.eval_limit", ""},
      {"robustness.adversarial_training", "false"},
      {"robustness.adversarial_attack", "pgd:8/255:7"},
  };
  return keys;
}

ConfigValues::ConfigValues() {
  for (const auto& [k, v] : config_keys()) values_[k] = v;
}

void ConfigValues::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

const std::string& ConfigValues::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

void ConfigValues::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

ConfigValues ConfigValues::from_string(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config parse error at line " + std::to_string(e.line()) + ": " +
                      e.message());
  }
  ConfigValues values;
  bool saw_schema = false;
  for (const auto& [section, node] : tree) {
    if (node.empty()) {
      if (section != "schema") throw ConfigError("unknown config key '" + section + "'");
      if (node.data() != std::to_string(kConfigSchema)) {
        throw ConfigError("unsupported config schema '" + node.data() + "' (expected " +
                          std::to_string(kConfigSchema) + ")");
      }
      saw_schema = true;
      continue;
    }
    for (const auto& [key, leaf] : node) values.set(section + "." + key, leaf.data());
  }
  if (!saw_schema) throw ConfigError("config is missing 'schema = " + std::to_string(kConfigSchema) + "'");
  return values;
}

ConfigValues ConfigValues::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return from_string(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string ConfigValues::to_ini() const {
  std::ostringstream out;
  out << "schema = " << kConfigSchema << "\n";
  std::string current;
  for (const auto& [key, _] : config_keys()) {
    const auto dot = key.find('.');
    const std::string section = key.substr(0, dot);
    if (section != current) {
      out << "\n[" << section << "]\n";
      current = section;
    }
    out << key.substr(dot + 1) << " = " << values_.at(key) << "\n";
  }
  return out.str();
}

double parse_real(const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) return parse_number(text);
  const double den = parse_number(text.substr(slash + 1));
  if (den == 0.0) throw std::invalid_argument("division by zero in '" + text + "'");
  return parse_number(text.substr(0, slash)) / den;
}

std::vector<AttackConfig> parse_attack_list(const std::string& text, float pgd_step_size,
                                            bool random_start) {
  std::vector<AttackConfig> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::vector<std::string> parts;
    std::stringstream fields(item);
    std::string f;
    while (std::getline(fields, f, ':')) parts.push_back(f);
    if (parts.size() < 2 || parts.size() > 3) {
      throw std::invalid_argument("attack '" + item + "' is not kind:eps[:steps]");
    }
    AttackConfig a;
    a.kind = parse_attack_kind(parts[0]);
    a.epsilon = static_cast<float>(parse_real(parts[1]));
    a.steps = parts.size() == 3 ? std::stoul(parts[2]) : 1;
    a.step_size = pgd_step_size;
    a.random_start = random_start;
    if (a.kind == AttackKind::Fgsm) a.steps = 1;
    a.validate();
    out.push_back(a);
  }
  return out;
}

namespace {

template <typename F>
auto field(const ConfigValues& v, const std::string& key, F parse) {
  try {
    return parse(v.get(key));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config key '" + key + "' = '" + v.get(key) + "': " + e.what());
  }
}

std::size_t to_size(const std::string& s) {
  std::size_t value = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("expected a non-negative integer");
  }
  return value;
}

std::optional<std::size_t> to_optional_size(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return to_size(s);
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("expected true or false");
}

float to_float(const std::string& s) { return static_cast<float>(parse_real(s)); }

}  // namespace

ExperimentConfig build_config(const ConfigValues& v) {
  ExperimentConfig c;
  c.name = field(v, "run.name", [](const std::string& s) {
    if (s.empty() || s.find_first_of("/\\") != std::string::npos) {
      throw std::invalid_argument("must be non-empty without path separators");
    }
    return s;
  });
  c.seeds = field(v, "run.seeds", [](const std::string& s) {
    std::vector<std::uint64_t> seeds;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) seeds.push_back(to_size(item));
    if (seeds.empty()) throw std::invalid_argument("need at least one seed");
    return seeds;
  });
  c.output_root = v.get("run.output_root");
  c.method = field(v, "run.method", [](const std::string& s) {
    if (s == "tenet") return Method::Tenet;
    if (s == "baseline") return Method::Baseline;
    throw std::invalid_argument("expected tenet or baseline");
  });

  c.data_format = field(v, "data.format", [](const std::string& s) { return parse_dataset_format(s); });
  c.train_path = v.get("data.train");
  c.test_path = v.get("data.test");
  c.train_limit = field(v, "data.train_limit", to_optional_size);
  c.test_limit = field(v, "data.test_limit", to_optional_size);
  c.samples_per_class = field(v, "data.samples_per_class", to_optional_size);
  c.val_size = field(v, "data.val_size", to_size);

  c.model = field(v, "model.spec", [](const std::string& s) {
    ModelSpec m = parse_model_spec(s);
    m.validate();
    return m;
  });

  c.tenet.groups = field(v, "tenet.groups", to_size);
  c.tenet.alpha = field(v, "tenet.alpha", to_float);
  c.tenet.mu = field(v, "tenet.mu", to_float);
  c.tenet.cfg_restarts = field(v, "tenet.cfg_restarts", to_size);
  c.tenet.cfg_max_iters = field(v, "tenet.cfg_max_iters", to_size);
  c.tenet.mask_mode = field(v, "tenet.mask_mode", [](const std::string& s) { return parse_mask_mode(s); });
  c.tenet.grouping_mode =
      field(v, "tenet.grouping_mode", [](const std::string& s) { return parse_grouping_mode(s); });
  c.tenet.detach_rm = field(v, "tenet.detach_rm", to_bool);
  c.tenet.binary_threshold = field(v, "tenet.binary_threshold", [](const std::string& s) {
    return s.empty() ? std::optional<float>{} : std::optional<float>{to_float(s)};
  });
  c.tenet.ortho_reduction = field(v, "tenet.ortho_reduction",
                                  [](const std::string& s) { return parse_ortho_reduction(s); });
  try {
    c.tenet.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("tenet section: ") + e.what());
  }
  if (c.method == Method::Tenet && c.tenet.grouping_mode == GroupingMode::Group &&
      c.tenet.groups > c.model.feature_shape()[0]) {
    throw ConfigError("tenet.groups exceeds the number of feature channels");
  }

  c.sgd.learning_rate = field(v, "optim.lr", to_float);
  c.sgd.momentum = field(v, "optim.momentum", to_float);
  c.sgd.weight_decay = field(v, "optim.weight_decay", to_float);
  c.sgd.max_grad_norm = field(v, "optim.max_grad_norm", to_float);
  if (!(c.sgd.learning_rate > 0.0f)) throw ConfigError("optim.lr must be positive");
  c.epochs = field(v, "optim.epochs", to_size);
  c.batch_size = field(v, "optim.batch_size", to_size);
  if (c.batch_size == 0) throw ConfigError("optim.batch_size must be positive");

  const float step = field(v, "robustness.pgd_step_size", to_float);
  const bool random_start = field(v, "robustness.pgd_random_start", to_bool);
  c.attacks = field(v, "robustness.attacks", [&](const std::string& s) {
    return parse_attack_list(s, step, random_start);
  });
  c.corruptions = field(v, "robustness.corruptions", [](const std::string& s) {
    return s.empty() ? std::vector<CorruptionSpec>{} : parse_corruption_suite(s);
  });
  c.eval_limit = field(v, "robustness.eval_limit", to_optional_size);
  c.adversarial_training = field(v, "robustness.adversarial_training", to_bool);
  c.adversarial = field(v, "robustness.adversarial_attack", [&](const std::string& s) {
    auto list = parse_attack_list(s, step, random_start);
    if (list.size() != 1) throw std::invalid_argument("expected exactly one attack");
    return list.front();
  });
  return c;
}

}  // namespace tenet
