#include "tenet/tenet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tenet/csv.hpp"
#include "tenet/ops.hpp"
#include "tenet/random.hpp"

namespace tenet {

std::string to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::Rrf: return "rrf";
    case MaskMode::Binary: return "binary";
    case MaskMode::PassthroughInactive: return "passthrough_inactive";
  }
  return "?";
}

std::string to_string(GroupingMode mode) {
  switch (mode) {
    case GroupingMode::Group: return "group";
    case GroupingMode::Channel: return "channel";
    case GroupingMode::Instance: return "instance";
  }
  return "?";
}

std::string to_string(OrthoReduction mode) {
  return mode == OrthoReduction::GroupSum ? "group_sum" : "group_mean";
}

OrthoReduction parse_ortho_reduction(const std::string& text) {
  if (text == "group_sum") return OrthoReduction::GroupSum;
  if (text == "group_mean") return OrthoReduction::GroupMean;
  throw std::invalid_argument("unknown ortho reduction '" + text +
                              "' (expected group_sum or group_mean)");
}

MaskMode parse_mask_mode(const std::string& text) {
  if (text == "rrf") return MaskMode::Rrf;
  if (text == "binary") return MaskMode::Binary;
  if (text == "passthrough_inactive") return MaskMode::PassthroughInactive;
  throw std::invalid_argument("unknown mask mode '" + text + "'");
}

GroupingMode parse_grouping_mode(const std::string& text) {
  if (text == "group") return GroupingMode::Group;
  if (text == "channel") return GroupingMode::Channel;
  if (text == "instance") return GroupingMode::Instance;
  throw std::invalid_argument("unknown grouping mode '" + text + "'");
}

void TenetConfig::validate() const {
  if (groups == 0) throw std::invalid_argument("tenet: groups must be >= 1");
  if (!(alpha >= 0.0f) || !(mu >= 0.0f)) {
    throw std::invalid_argument("tenet: alpha and mu must be >= 0");
  }
  if (!detach_rm && grouping_mode == GroupingMode::Instance) {
    throw std::invalid_argument("tenet: instance-wise inhibition requires detach_rm");
  }
}

// ---------------------------------------------------------------------------

ProbeResult gmw_weights(const ConvNet& model, const Tensor& features) {
  Tape tape;
  const BoundParams bound = model.bind_frozen(tape);
  Var a = tape.leaf(features);
  Var logits = model.forward_classifier(bound, a);
  std::vector<int> pred = argmax_rows(logits.value());
  std::vector<std::size_t> predicted(pred.begin(), pred.end());
  Var score = ops::sum(ops::select_columns(logits, predicted));
  tape.backward(score);

  const std::size_t n = features.dim(0), c = features.dim(1);
  const std::size_t plane = features.dim(2) * features.dim(3);
  const Tensor& grad = *a.grad();
  Tensor weights({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    const float* g = grad.raw() + i * plane;
    for (std::size_t p = 0; p < plane; ++p) acc += g[p];
    weights[i] = static_cast<float>(acc / static_cast<double>(plane));
  }
  return {std::move(weights), std::move(predicted), logits.value()};
}

namespace {

void check_grouping(std::size_t channels, std::size_t weights,
                    const FeatureGrouping& grouping, const char* op) {
  if (grouping.ids.size() != channels || weights != channels) {
    throw DimensionError(std::string(op) + ": grouping/weights cover " +
                         std::to_string(grouping.ids.size()) + "/" +
                         std::to_string(weights) + " channels, maps have " +
                         std::to_string(channels));
  }
}

std::vector<std::size_t> sizes_of(const FeatureGrouping& g) {
  std::vector<std::size_t> sizes(g.num_groups(), 0);
  for (std::size_t id : g.ids) ++sizes.at(id);
  return sizes;
}

}  // namespace

std::vector<float> group_importance(std::span<const float> weights,
                                    const FeatureGrouping& grouping) {
  check_grouping(weights.size(), weights.size(), grouping, "group_importance");
  const std::vector<std::size_t> sizes = sizes_of(grouping);
  std::vector<double> acc(sizes.size(), 0.0);
  for (std::size_t j = 0; j < weights.size(); ++j) acc[grouping.ids[j]] += weights[j];
  std::vector<float> out(sizes.size());
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    out[l] = static_cast<float>(acc[l] / static_cast<double>(sizes[l]));
  }
  return out;
}

Tensor group_maps(const Tensor& features, std::span<const float> weights,
                  const FeatureGrouping& grouping) {
  if (features.rank() != 3) throw DimensionError("group_maps: expected [N_c, H, W]");
  check_grouping(features.dim(0), weights.size(), grouping, "group_maps");
  const std::size_t plane = features.dim(1) * features.dim(2);
  const std::vector<std::size_t> sizes = sizes_of(grouping);
  std::vector<double> acc(sizes.size() * plane, 0.0);
  for (std::size_t j = 0; j < features.dim(0); ++j) {
    auto a = features.row(j);
    double* dst = acc.data() + grouping.ids[j] * plane;
    for (std::size_t p = 0; p < plane; ++p) dst[p] += static_cast<double>(weights[j]) * a[p];
  }
  Tensor out({sizes.size(), features.dim(1), features.dim(2)});
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    for (std::size_t p = 0; p < plane; ++p) {
      out[l * plane + p] =
          static_cast<float>(acc[l * plane + p] / static_cast<double>(sizes[l]));
    }
  }
  return out;
}

Tensor instance_map(const Tensor& features, std::span<const float> weights) {
  if (features.rank() != 3 || weights.size() != features.dim(0)) {
    throw DimensionError("instance_map: weights must match channels of [N_c, H, W]");
  }
  const std::size_t plane = features.dim(1) * features.dim(2);
  std::vector<double> cam(plane, 0.0);
  for (std::size_t j = 0; j < features.dim(0); ++j) {
    auto a = features.row(j);
    for (std::size_t p = 0; p < plane; ++p) cam[p] += static_cast<double>(weights[j]) * a[p];
  }
  for (double& v : cam) v = std::max(v, 0.0);
  const auto [lo, hi] = std::minmax_element(cam.begin(), cam.end());
  const double range = *hi - *lo;
  Tensor out({1, features.dim(1), features.dim(2)});
  for (std::size_t p = 0; p < plane; ++p) {
    out[p] = range > 0.0 ? static_cast<float>((cam[p] - *lo) / range) : 0.0f;
  }
  return out;
}

Tensor reversed_maps(const Tensor& maps, std::span<const float> importance,
                     MaskMode mode, std::optional<float> binary_threshold) {
  if (maps.rank() != 3 || maps.dim(0) != importance.size()) {
    throw DimensionError("reversed_maps: need one importance score per map");
  }
  const std::size_t plane = maps.dim(1) * maps.dim(2);
  Tensor out(maps.shape());
  for (std::size_t l = 0; l < importance.size(); ++l) {
    const bool active = importance[l] > 0.0f;
    const float* m = maps.raw() + l * plane;
    float* rm = out.raw() + l * plane;
    switch (mode) {
      case MaskMode::Rrf:
        for (std::size_t p = 0; p < plane; ++p) {
          rm[p] = active ? ops::stable_sigmoid(-m[p]) : 0.0f;
        }
        break;
      case MaskMode::PassthroughInactive:
        for (std::size_t p = 0; p < plane; ++p) {
          rm[p] = active ? ops::stable_sigmoid(-m[p]) : 1.0f;
        }
        break;
      case MaskMode::Binary: {
        float tau = 0.0f;
        if (binary_threshold) {
          tau = *binary_threshold;
        } else {
          double acc = 0.0;
          for (std::size_t p = 0; p < plane; ++p) acc += m[p];
          tau = static_cast<float>(acc / static_cast<double>(plane));
        }
        for (std::size_t p = 0; p < plane; ++p) {
          rm[p] = active && m[p] < tau ? 1.0f : 0.0f;
        }
        break;
      }
    }
  }
  return out;
}

Tensor rrf(const Tensor& maps, std::span<const float> importance) {
  return reversed_maps(maps, importance, MaskMode::Rrf);
}

std::size_t GroupStats::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

FeatureGrouping make_grouping(const Tensor& features, const TenetConfig& config,
                              std::uint64_t seed) {
  switch (config.grouping_mode) {
    case GroupingMode::Group:
      return cfg_group(features,
                       {config.groups, config.cfg_restarts, config.cfg_max_iters}, seed);
    case GroupingMode::Channel:
      return identity_grouping(features.dim(0));
    case GroupingMode::Instance:
      return single_grouping(features.dim(0));
  }
  throw std::logic_error("unreachable grouping mode");
}

GroupStats group_stats(const Tensor& features, std::span<const float> weights,
                       const FeatureGrouping& grouping, const TenetConfig& config) {
  GroupStats s;
  s.weights.assign(weights.begin(), weights.end());
  if (config.grouping_mode == GroupingMode::Instance) {
    const double mean_w =
        std::accumulate(weights.begin(), weights.end(), 0.0) /
        static_cast<double>(weights.size());
    s.importance = {static_cast<float>(mean_w)};
    s.maps = instance_map(features, weights);
  } else {
    s.importance = group_importance(weights, grouping);
    s.maps = group_maps(features, weights, grouping);
  }
  s.reversed = reversed_maps(s.maps, s.importance, config.mask_mode, config.binary_threshold);
  for (float i : s.importance) s.active.push_back(i > 0.0f);
  return s;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<ops::GroupIds> ids_of(std::span<const FeatureGrouping> groupings) {
  std::vector<ops::GroupIds> ids;
  ids.reserve(groupings.size());
  for (const FeatureGrouping& g : groupings) ids.push_back(g.ids);
  return ids;
}

}  // namespace

Var inhibited_forward(const ConvNet& model, const BoundParams& bound,
                      const Var& features, const Tensor& reversed,
                      std::span<const FeatureGrouping> groupings) {
  return inhibited_forward(model, bound, features,
                           features.tape()->constant(reversed), groupings);
}

Var inhibited_forward(const ConvNet& model, const BoundParams& bound,
                      const Var& features, const Var& reversed,
                      std::span<const FeatureGrouping> groupings) {
  const Tensor& a = features.value();
  const Tensor& rm = reversed.value();
  if (a.rank() != 4 || rm.rank() != 4 || rm.dim(0) != a.dim(0) ||
      rm.dim(2) != a.dim(2) || rm.dim(3) != a.dim(3)) {
    throw DimensionError("inhibited_forward: reversed maps " + to_string(rm.shape()) +
                         " do not match features " + to_string(a.shape()));
  }
  for (const FeatureGrouping& g : groupings) {
    if (g.num_groups() != rm.dim(1)) {
      throw DimensionError("inhibited_forward: grouping has " +
                           std::to_string(g.num_groups()) + " groups, reversed maps " +
                           std::to_string(rm.dim(1)));
    }
  }
  const std::vector<ops::GroupIds> ids = ids_of(groupings);
  Var mask = ops::gather_groups(reversed, ids, a.dim(1));
  return model.forward_classifier(bound, ops::hadamard(features, mask));
}

Var orthogonal_loss(const Var& features, std::span<const FeatureGrouping> groupings,
                    OrthoReduction reduction) {
  if (groupings.empty()) throw DimensionError("orthogonal_loss: no groupings");
  const std::vector<ops::GroupIds> ids = ids_of(groupings);
  const std::size_t groups = groupings.front().num_groups();
  if (reduction == OrthoReduction::GroupSum) {
    return ops::mean(ops::group_product(ops::group_sum(features, ids, groups)));
  }
  const Shape& s = features.shape();
  const Tensor ones = Tensor::ones({s.at(0), s.at(1)});
  return ops::mean(ops::group_product(ops::group_weighted_mean(features, ones, ids, groups)));
}

Var total_loss(const Var& ce_clean, const Var& ce_inhibited, const Var& ortho,
               float alpha, float mu) {
  Var total = ce_clean;
  if (alpha != 0.0f) total = ops::scale_add(total, ce_inhibited, alpha);
  if (mu != 0.0f) total = ops::scale_add(total, ortho, mu);
  return total;
}

double total_loss(double ce_clean, double ce_inhibited, double ortho, double alpha,
                  double mu) {
  return ce_clean + alpha * ce_inhibited + mu * ortho;
}

// ---------------------------------------------------------------------------

std::vector<double> StepReport::ranked_importance() const {
  std::vector<double> out;
  for (const auto& per_sample : importance) {
    std::vector<float> sorted = per_sample;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    if (out.size() < sorted.size()) out.resize(sorted.size(), 0.0);
    for (std::size_t l = 0; l < sorted.size(); ++l) out[l] += sorted[l];
  }
  for (double& v : out) v /= static_cast<double>(std::max<std::size_t>(importance.size(), 1));
  return out;
}

std::string StepReport::csv_header(std::size_t groups) {
  std::string h = "step,L_c_clean,L_c_inhibited,L_o,L_total,active_groups";
  for (std::size_t l = 1; l <= groups; ++l) h += ",I_" + std::to_string(l);
  return h;
}

std::string StepReport::csv_row(std::size_t groups) const {
  std::ostringstream out;
  out << step << ',' << format_number(ce_clean) << ',' << format_number(ce_inhibited)
      << ',' << format_number(ortho) << ',' << format_number(total) << ','
      << format_number(active_groups);
  const std::vector<double> ranked = ranked_importance();
  for (std::size_t l = 0; l < groups; ++l) {
    out << ',';
    if (l < ranked.size()) out << format_number(ranked[l]);
  }
  return out.str();
}

StepReport tenet_step(ConvNet& model, const Batch& batch, const TenetConfig& config,
                      const SgdConfig& sgd, SgdState& state, std::uint64_t seed,
                      std::uint64_t step) {
  config.validate();
  StepReport report;
  report.step = step;
  const std::size_t n = batch.size();
  Tape tape(static_cast<std::int64_t>(step));
  try {
    const BoundParams bound = model.bind(tape);
    Var a = model.forward_features(bound, tape.constant(batch.images));
    // Copied: recording further ops may reallocate the tape's node storage.
    const Tensor av = a.value();

    std::vector<FeatureGrouping> groupings;
    groupings.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      groupings.push_back(make_grouping(av.slice(i), config, mix_seed(seed, {step, i})));
    }

    const ProbeResult probe = gmw_weights(model, av);
    const std::size_t groups = groupings.front().num_groups();
    Tensor reversed({n, groups, av.dim(2), av.dim(3)});
    std::vector<float> gates(n * groups);
    std::size_t active = 0;
    for (std::size_t i = 0; i < n; ++i) {
      GroupStats s = group_stats(av.slice(i), probe.weights.row(i), groupings[i], config);
      std::copy(s.reversed.data().begin(), s.reversed.data().end(), reversed.row(i).begin());
      for (std::size_t l = 0; l < groups; ++l) gates[i * groups + l] = s.active[l] ? 1.0f : 0.0f;
      active += s.active_count();
      report.importance.push_back(std::move(s.importance));
      report.group_sizes.push_back(sizes_of(groupings[i]));
    }
    report.active_groups = static_cast<double>(active) / static_cast<double>(n);

    Var logits_clean = model.forward_classifier(bound, a);
    Var logits_inhibited;
    const bool differentiable_rm = !config.detach_rm && config.mask_mode != MaskMode::Binary;
    if (differentiable_rm) {
      const std::vector<ops::GroupIds> ids = ids_of(groupings);
      Var m = ops::group_weighted_mean(a, probe.weights, ids, groups);
      Tensor gate({n, groups, av.dim(2), av.dim(3)});
      Tensor open_gate(gate.shape());
      const std::size_t plane = av.dim(2) * av.dim(3);
      for (std::size_t k = 0; k < n * groups; ++k) {
        std::fill_n(gate.raw() + k * plane, plane, gates[k]);
        if (config.mask_mode == MaskMode::PassthroughInactive) {
          std::fill_n(open_gate.raw() + k * plane, plane, 1.0f - gates[k]);
        }
      }
      Var rm = ops::hadamard(ops::sigmoid(ops::scale(m, -1.0f)), tape.constant(gate));
      if (config.mask_mode == MaskMode::PassthroughInactive) {
        rm = ops::add(rm, tape.constant(open_gate));
      }
      logits_inhibited = inhibited_forward(model, bound, a, rm, groupings);
    } else {
      logits_inhibited = inhibited_forward(model, bound, a, reversed, groupings);
    }

    Var ce_clean = ops::softmax_cross_entropy(logits_clean, batch.labels);
    Var ce_inhibited = ops::softmax_cross_entropy(logits_inhibited, batch.labels);
    Var ortho = orthogonal_loss(a, groupings, config.ortho_reduction);
    Var total = total_loss(ce_clean, ce_inhibited, ortho, config.alpha, config.mu);
    report.ce_clean = ce_clean.value()[0];
    report.ce_inhibited = ce_inhibited.value()[0];
    report.ortho = ortho.value()[0];
    report.total = total.value()[0];

    zero_grads(model.params());
    tape.backward(total);
    sgd_update(model.params(), sgd, state);
  } catch (const NonFiniteError& e) {
    throw StepAborted(std::string(e.what()) + " (step " + std::to_string(step) + ")",
                      std::move(report));
  }
  return report;
}

StepReport baseline_step(ConvNet& model, const Batch& batch, const SgdConfig& sgd,
                         SgdState& state, std::uint64_t step) {
  StepReport report;
  report.step = step;
  Tape tape(static_cast<std::int64_t>(step));
  try {
    const BoundParams bound = model.bind(tape);
    Var logits = model.forward(bound, tape.constant(batch.images));
    Var ce = ops::softmax_cross_entropy(logits, batch.labels);
    report.ce_clean = ce.value()[0];
    report.total = report.ce_clean;
    zero_grads(model.params());
    tape.backward(ce);
    sgd_update(model.params(), sgd, state);
  } catch (const NonFiniteError& e) {
    throw StepAborted(std::string(e.what()) + " (step " + std::to_string(step) + ")",
                      std::move(report));
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> softmax_row(std::span<const float> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double total = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    p[c] = std::exp(static_cast<double>(z[c]) - zmax);
    total += p[c];
  }
  for (double& v : p) v /= total;
  return p;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::vector<double> group_confidence_probe(const ConvNet& model, const Tensor& features,
                                           const FeatureGrouping& grouping) {
  if (features.rank() != 3 || grouping.ids.size() != features.dim(0)) {
    throw DimensionError("group_confidence_probe: grouping does not cover features");
  }
  const std::size_t groups = grouping.num_groups();
  const std::size_t plane = features.dim(1) * features.dim(2);
  std::vector<Tensor> variants(groups + 1, features);
  for (std::size_t l = 0; l < groups; ++l) {
    for (std::size_t j = 0; j < grouping.ids.size(); ++j) {
      if (grouping.ids[j] == l) std::fill_n(variants[l + 1].raw() + j * plane, plane, 0.0f);
    }
  }
  const Tensor logits = model.classify(stack(variants));
  const std::vector<double> full = softmax_row(logits.row(0));
  const auto pred = static_cast<std::size_t>(
      std::max_element(full.begin(), full.end()) - full.begin());
  std::vector<double> deltas(groups);
  for (std::size_t l = 0; l < groups; ++l) {
    deltas[l] = full[pred] - softmax_row(logits.row(l + 1))[pred];
  }
  return deltas;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("spearman: length mismatch");
  if (a.size() < 2) return 0.0;
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
    vb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace tenet
