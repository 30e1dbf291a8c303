#include "tenet/evaluation.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tenet/csv.hpp"
#include "tenet/random.hpp"

namespace tenet {

std::string condition_label(const Condition& condition) {
  if (const auto* a = std::get_if<AttackConfig>(&condition)) {
    const std::size_t steps = a->kind == AttackKind::Fgsm ? 1 : a->steps;
    return "attack:" + to_string(a->kind) + ":" + format_number(a->epsilon) + ":" +
           std::to_string(steps);
  }
  if (const auto* c = std::get_if<CorruptionSpec>(&condition)) {
    return "corrupt:" + to_string(c->kind) + ":" + std::to_string(c->severity);
  }
  return "clean";
}

EvalMetrics evaluate(const ConvNet& model, const Dataset& data, const Condition& condition,
                     std::uint64_t seed, std::size_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("evaluate: batch_size must be positive");
  const std::size_t classes = std::max(data.num_classes, model.spec().num_classes);

  EvalMetrics m;
  m.n_samples = data.size();
  m.per_class_error.assign(classes, 0.0);
  m.per_class_count.assign(classes, 0);
  m.predictions.reserve(data.size());
  std::vector<std::size_t> wrong(classes, 0);
  std::size_t total_wrong = 0;

  for (std::size_t begin = 0, b = 0; begin < data.size(); begin += batch_size, ++b) {
    Batch batch = data.range(begin, begin + batch_size);
    if (const auto* a = std::get_if<AttackConfig>(&condition)) {
      batch.images = attack(model, batch.images, batch.labels, *a, mix_seed(seed, {b}));
    } else if (const auto* c = std::get_if<CorruptionSpec>(&condition)) {
      std::vector<Tensor> items;
      items.reserve(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        items.push_back(corrupt(batch.images.slice(i), *c, mix_seed(seed, {begin + i})));
      }
      batch.images = stack(items);
    }
    const std::vector<int> pred = argmax_rows(model.logits(batch.images));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch.labels[i] < 0 || static_cast<std::size_t>(batch.labels[i]) >= classes) {
        throw std::out_of_range("evaluate: label " + std::to_string(batch.labels[i]) +
                                " out of range");
      }
      const auto y = static_cast<std::size_t>(batch.labels[i]);
      ++m.per_class_count[y];
      if (pred[i] != batch.labels[i]) {
        ++wrong[y];
        ++total_wrong;
      }
      m.predictions.push_back(pred[i]);
    }
  }
  m.top1_error = static_cast<double>(total_wrong) / static_cast<double>(m.n_samples);
  for (std::size_t k = 0; k < classes; ++k) {
    if (m.per_class_count[k] != 0) {
      m.per_class_error[k] =
          static_cast<double>(wrong[k]) / static_cast<double>(m.per_class_count[k]);
    }
  }
  return m;
}

std::vector<CorruptionSpec> parse_corruption_suite(const std::string& text) {
  std::vector<CorruptionSpec> suite;
  if (text == "all") {
    for (CorruptionKind k : all_corruption_kinds()) {
      for (int s = 1; s <= 5; ++s) suite.push_back({k, s});
    }
    return suite;
  }
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    const CorruptionKind kind = parse_corruption_kind(item.substr(0, colon));
    if (colon == std::string::npos) {
      for (int s = 1; s <= 5; ++s) suite.push_back({kind, s});
      continue;
    }
    const std::string sev = item.substr(colon + 1);
    int severity = 0;
    try {
      std::size_t used = 0;
      severity = std::stoi(sev, &used);
      if (used != sev.size()) throw std::invalid_argument(sev);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad severity in corruption suite item '" + item + "'");
    }
    if (severity < 1 || severity > 5) {
      throw std::invalid_argument("corruption severity must be in 1..5: '" + item + "'");
    }
    suite.push_back({kind, severity});
  }
  if (suite.empty()) throw std::invalid_argument("empty corruption suite");
  return suite;
}

std::vector<CorruptionResult> corruption_eval(const ConvNet& model, const Dataset& data,
                                              std::span<const CorruptionSpec> suite,
                                              std::uint64_t seed) {
  std::vector<CorruptionResult> out;
  for (const CorruptionSpec& spec : suite) {
    const std::uint64_t cell_seed =
        mix_seed(seed, {static_cast<std::uint64_t>(spec.kind), static_cast<std::uint64_t>(spec.severity)});
    out.push_back({spec, evaluate(model, data, spec, cell_seed)});
  }
  return out;
}

double mce(std::span<const double> errors) {
  if (errors.empty()) throw std::invalid_argument("mce: empty corruption suite");
  double acc = 0.0;
  for (double e : errors) acc += e;
  return acc / static_cast<double>(errors.size());
}

double mce(std::span<const CorruptionResult> results) {
  std::vector<double> errors;
  for (const auto& r : results) errors.push_back(r.metrics.top1_error);
  return mce(errors);
}

const std::vector<std::string>& eval_csv_header() {
  static const std::vector<std::string> header = {"run_id", "model_checkpoint", "condition",
                                                  "n_samples", "top1_error"};
  return header;
}

void append_eval_row(const std::filesystem::path& path, const EvalRow& row) {
  append_csv(path, eval_csv_header(),
             {row.run_id, row.model_checkpoint, row.condition, std::to_string(row.n_samples),
              format_number(row.top1_error)});
}

std::vector<EvalRow> read_eval_rows(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  if (table.header != eval_csv_header()) {
    throw std::runtime_error(path.string() + " is not an evaluation csv");
  }
  std::vector<EvalRow> rows;
  for (const auto& r : table.rows) {
    if (r.size() != 5) throw std::runtime_error(path.string() + ": malformed row");
    rows.push_back({r[0], r[1], r[2], static_cast<std::size_t>(std::stoull(r[3])),
                    parse_number(r[4])});
  }
  return rows;
}

}  // namespace tenet
