#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tenet/convnet.hpp"
#include "tenet/grouping.hpp"
#include "tenet/optim.hpp"
#include "tenet/tape.hpp"
#include "tenet/tensor.hpp"

namespace tenet {

/// How a group's weighted map becomes a multiplicative mask.
enum class MaskMode {
  /// [I > 0] * sigmoid(-m)
  Rrf,
  /// [I > 0] * [m < threshold]
  Binary,
  /// sigmoid(-m) for groups with I > 0, 1 elsewhere
  PassthroughInactive,
};

/// What the masks are computed over.
enum class GroupingMode {
  /// CFG groups of channels.
  Group,
  /// Every channel is its own group.
  Channel,
  /// One Grad-CAM map shared by all channels.
  Instance,
};

/// How channels are combined per group before the orthogonal product.
enum class OrthoReduction {
  /// S_l = sum of the group's maps.
  GroupSum,
  /// S_l / n_l. Keeps the product of N_G terms near the activation scale.
  GroupMean,
};

std::string to_string(MaskMode mode);
std::string to_string(GroupingMode mode);
std::string to_string(OrthoReduction mode);
MaskMode parse_mask_mode(const std::string& text);
GroupingMode parse_grouping_mode(const std::string& text);
OrthoReduction parse_ortho_reduction(const std::string& text);

struct TenetConfig {
  std::size_t groups = 6;
  float alpha = 0.1f;
  float mu = 0.1f;
  std::size_t cfg_restarts = 4;
  std::size_t cfg_max_iters = 20;
  MaskMode mask_mode = MaskMode::Rrf;
  GroupingMode grouping_mode = GroupingMode::Group;
  /// Treat the reversed maps as constants in the training backward pass.
  bool detach_rm = true;
  /// Binary-mask threshold; unset means the mean of each group map.
  std::optional<float> binary_threshold;
  OrthoReduction ortho_reduction = OrthoReduction::GroupMean;

  void validate() const;
};

struct Batch {
  Tensor images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// ---------------------------------------------------------------------------
// Group-wise map weighting

struct ProbeResult {
  /// w[n, j]: spatial mean of d(predicted-class logit)/d a_j, shape [N, N_c].
  Tensor weights;
  std::vector<std::size_t> predicted;
  Tensor logits;
};

/// Gradient probe through the classifier D only. Runs on a private tape with
/// frozen parameters, so model parameters and their gradients are untouched.
ProbeResult gmw_weights(const ConvNet& model, const Tensor& features);

/// I_l = mean of w_j over the channels of group l.
std::vector<float> group_importance(std::span<const float> weights,
                                    const FeatureGrouping& grouping);

/// m_l = (1 / n_l) * sum_{ID_j = l} w_j * a_j for one sample's maps [N_c,H,W].
Tensor group_maps(const Tensor& features, std::span<const float> weights,
                  const FeatureGrouping& grouping);

/// Grad-CAM map relu(sum_j w_j a_j), min-max normalised to [0, 1] (a constant
/// map normalises to 0). Shape [1, H, W].
Tensor instance_map(const Tensor& features, std::span<const float> weights);

/// Rectified reverse function: rm_l = [I_l > 0] / (1 + exp(m_l)).
Tensor rrf(const Tensor& maps, std::span<const float> importance);

/// Reversed maps under any mask mode. `maps` is [G, H, W].
Tensor reversed_maps(const Tensor& maps, std::span<const float> importance,
                     MaskMode mode, std::optional<float> binary_threshold = {});

struct GroupStats {
  std::vector<float> weights;
  std::vector<float> importance;
  Tensor maps;
  Tensor reversed;
  std::vector<bool> active;

  std::size_t active_count() const;
};

/// Grouping for one sample under the configured grouping mode.
FeatureGrouping make_grouping(const Tensor& features, const TenetConfig& config,
                              std::uint64_t seed);

GroupStats group_stats(const Tensor& features, std::span<const float> weights,
                       const FeatureGrouping& grouping, const TenetConfig& config);

// ---------------------------------------------------------------------------
// Inhibition and losses

/// D(RM (x) A): channel j of sample n is scaled elementwise by
/// reversed[n, ID_j]. `reversed` is [N, G, H, W] and enters as a constant.
Var inhibited_forward(const ConvNet& model, const BoundParams& bound,
                      const Var& features, const Tensor& reversed,
                      std::span<const FeatureGrouping> groupings);
/// Same, with gradient flowing into `reversed`.
Var inhibited_forward(const ConvNet& model, const BoundParams& bound,
                      const Var& features, const Var& reversed,
                      std::span<const FeatureGrouping> groupings);

/// Spatial (and batch) mean of the elementwise product over groups of the
/// per-group channel sums (or means).
Var orthogonal_loss(const Var& features, std::span<const FeatureGrouping> groupings,
                    OrthoReduction reduction = OrthoReduction::GroupSum);

/// L_c(clean) + alpha * L_c(inhibited) + mu * L_o. Terms with a zero weight
/// are left out of the graph entirely.
Var total_loss(const Var& ce_clean, const Var& ce_inhibited, const Var& ortho,
               float alpha, float mu);
double total_loss(double ce_clean, double ce_inhibited, double ortho,
                  double alpha, double mu);

// ---------------------------------------------------------------------------
// Training steps

struct StepReport {
  std::uint64_t step = 0;
  double ce_clean = 0.0;
  double ce_inhibited = 0.0;
  double ortho = 0.0;
  double total = 0.0;
  /// Mean number of groups with I_l > 0 per sample.
  double active_groups = 0.0;
  /// Per-sample importance scores, indexed by group.
  std::vector<std::vector<float>> importance;
  std::vector<std::vector<std::size_t>> group_sizes;

  /// Importance scores sorted descending within each sample, then averaged
  /// over the batch. Group labels from clustering carry no meaning across
  /// samples, so the rank is the comparable quantity.
  std::vector<double> ranked_importance() const;

  static std::string csv_header(std::size_t groups);
  /// step,L_c_clean,L_c_inhibited,L_o,L_total,active_groups,I_1..I_G
  std::string csv_row(std::size_t groups) const;
};

/// Thrown when a step produces a non-finite value; carries what the step had
/// computed so far.
class StepAborted : public std::runtime_error {
 public:
  StepAborted(const std::string& what, StepReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const StepReport& report() const { return report_; }

 private:
  StepReport report_;
};

/// One TENET update: F once, CFG per sample, GMW probe, reversed maps, D on
/// the clean and the inhibited maps, L_total, a single backward, SGD.
StepReport tenet_step(ConvNet& model, const Batch& batch, const TenetConfig& config,
                      const SgdConfig& sgd, SgdState& state, std::uint64_t seed,
                      std::uint64_t step);

/// Plain cross-entropy SGD step.
StepReport baseline_step(ConvNet& model, const Batch& batch, const SgdConfig& sgd,
                         SgdState& state, std::uint64_t step);

// ---------------------------------------------------------------------------
// Analysis

/// Predicted-class softmax confidence with all channels minus the confidence
/// with the channels of group l zeroed, for every group l. `features` is one
/// sample's [N_c, H, W].
std::vector<double> group_confidence_probe(const ConvNet& model,
                                           const Tensor& features,
                                           const FeatureGrouping& grouping);

/// Spearman rank correlation with average ranks for ties; 0 when either side
/// is constant.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace tenet
