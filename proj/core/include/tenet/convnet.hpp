#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tenet/optim.hpp"
#include "tenet/tape.hpp"
#include "tenet/tensor.hpp"

namespace tenet {

/// conv(kernel, stride, padding) -> bias -> relu -> optional 2x2/2 max pool
struct ConvStage {
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  bool pool = false;

  friend bool operator==(const ConvStage&, const ConvStage&) = default;
};

/// Architecture description. Stages [0, split_point) form the feature
/// extractor F; the feature maps A are the output of stage split_point - 1.
/// The classifier D is the remaining stages, a global average pool, optional
/// hidden dense layers (relu), and the output dense layer.
struct ModelSpec {
  std::size_t in_channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<ConvStage> stages;
  std::size_t split_point = 0;
  std::vector<std::size_t> head_hidden;
  std::size_t num_classes = 10;

  /// 32 -> 64 -> 128 channels, 3x3 kernels; A is the 128-channel map taken
  /// before pooling, D is global average pool + one dense layer.
  static ModelSpec desk_default();

  /// Throws std::invalid_argument when the stages cannot be applied to the
  /// input extents or the split point is out of range.
  void validate() const;

  /// Per-sample shape of A: {N_c, H_a, W_a}.
  Shape feature_shape() const;
  Shape input_shape() const { return {in_channels, height, width}; }
  std::size_t parameter_count() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

std::string to_string(const ModelSpec& spec);
ModelSpec parse_model_spec(const std::string& text);

/// Parameters bound to a tape for one forward computation.
struct BoundParams {
  std::vector<Var> vars;
};

/// Small convolutional network split into feature extractor F and classifier
/// D. Parameters are ordered conv0.weight, conv0.bias, ..., dense0.weight,
/// dense0.bias, ...
class ConvNet {
 public:
  ConvNet() = default;

  /// He-normal weights (std = sqrt(2 / fan_in)), zero biases.
  static ConvNet init(const ModelSpec& spec, std::uint64_t seed);
  static ConvNet zeros(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  Parameter& param(const std::string& name);

  /// Trainable binding: backward accumulates into Parameter::grad.
  BoundParams bind(Tape& tape);
  /// Frozen binding: parameters enter the tape as constants.
  BoundParams bind_frozen(Tape& tape) const;

  Var forward_features(const BoundParams& bound, const Var& x) const;
  Var forward_classifier(const BoundParams& bound, const Var& features) const;
  Var forward(const BoundParams& bound, const Var& x) const;

  /// Inference helpers on a private tape.
  Tensor features(const Tensor& x) const;
  Tensor classify(const Tensor& features) const;
  Tensor logits(const Tensor& x) const;

 private:
  std::size_t head_param_offset() const;
  void check_input(const Tensor& x) const;

  ModelSpec spec_;
  std::vector<Parameter> params_;
};

std::vector<int> argmax_rows(const Tensor& logits);

/// Training progress stored next to the parameters for resumption.
struct TrainState {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::uint64_t metrics_rows = 0;
  double best_val_error = 1.0;
  SgdState optimizer;
};

/// Binary container: magic, format version, model spec text, parameters as
/// raw little-endian float32, optional training state. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ConvNet& model,
                     const TrainState* state = nullptr);

struct Checkpoint {
  ConvNet model;
  std::optional<TrainState> state;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tenet
