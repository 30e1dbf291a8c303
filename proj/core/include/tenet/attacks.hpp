#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "tenet/convnet.hpp"
#include "tenet/tensor.hpp"

namespace tenet {

enum class AttackKind { Fgsm, Pgd };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& text);

struct AttackConfig {
  AttackKind kind = AttackKind::Fgsm;
  /// L-infinity budget on the [0, 1] pixel scale.
  float epsilon = 8.0f / 255.0f;
  std::size_t steps = 1;
  float step_size = 2.0f / 255.0f;
  bool random_start = true;

  void validate() const;
};

/// Gradient of the summed clean cross-entropy with respect to the input.
/// Parameters are frozen; the model is not modified.
Tensor input_gradient(const ConvNet& model, const Tensor& x, std::span<const int> labels);

/// Projects `candidate` onto the eps-ball around `x` intersected with [0, 1].
/// Values are nudged to the nearest float inside the ball, so that
/// |candidate - x| <= eps holds exactly in real arithmetic.
void project_linf(Tensor& candidate, const Tensor& x, float epsilon);

/// clip(x + eps * sign(grad), 0, 1); sign(0) = 0.
Tensor fgsm(const ConvNet& model, const Tensor& x, std::span<const int> labels,
            float epsilon);

/// K signed-gradient steps, each followed by projection. The random start
/// draws uniformly from the eps-ball using `seed`.
Tensor pgd(const ConvNet& model, const Tensor& x, std::span<const int> labels,
           const AttackConfig& config, std::uint64_t seed);

/// Dispatches on config.kind.
Tensor attack(const ConvNet& model, const Tensor& x, std::span<const int> labels,
              const AttackConfig& config, std::uint64_t seed);

}  // namespace tenet
