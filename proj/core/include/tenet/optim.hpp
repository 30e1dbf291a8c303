#pragma once

#include <span>
#include <vector>

#include "tenet/tape.hpp"
#include "tenet/tensor.hpp"

namespace tenet {

struct SgdConfig {
  float learning_rate = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  /// Global L2 gradient-norm cap; 0 disables clipping.
  float max_grad_norm = 0.0f;
};

/// Momentum buffers, one per parameter, created lazily on the first update.
struct SgdState {
  std::vector<Tensor> velocity;
};

/// In-place SGD step: g += wd * p; v = momentum * v + g; p -= lr * v.
/// Throws NonFiniteError naming the parameter when a gradient is NaN/Inf.
/// Gradients are left untouched; callers zero them before the next backward.
void sgd_update(std::span<Parameter> params, const SgdConfig& config,
                SgdState& state);

void zero_grads(std::span<Parameter> params);

}  // namespace tenet
