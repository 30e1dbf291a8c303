#include "tenet/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace tenet {

void zero_grads(std::span<Parameter> params) {
  for (Parameter& p : params) p.zero_grad();
}

void sgd_update(std::span<Parameter> params, const SgdConfig& config,
                SgdState& state) {
  if (!(config.learning_rate > 0.0f)) {
    throw std::invalid_argument("sgd_update: learning rate must be > 0");
  }
  if (state.velocity.empty()) {
    for (const Parameter& p : params) {
      state.velocity.push_back(Tensor::zeros(p.value.shape()));
    }
  }
  if (state.velocity.size() != params.size()) {
    throw DimensionError("sgd_update: optimizer state does not match parameters");
  }

  double norm_sq = 0.0;
  for (const Parameter& p : params) {
    if (p.grad.shape() != p.value.shape()) {
      throw DimensionError("sgd_update: gradient of '" + p.name +
                           "' has shape " + to_string(p.grad.shape()));
    }
    if (!p.grad.all_finite()) throw NonFiniteError("sgd_update:" + p.name, -1);
    for (float g : p.grad.data()) norm_sq += static_cast<double>(g) * g;
  }
  float clip = 1.0f;
  if (config.max_grad_norm > 0.0f) {
    const double norm = std::sqrt(norm_sq);
    if (norm > config.max_grad_norm) {
      clip = static_cast<float>(config.max_grad_norm / norm);
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    Tensor& v = state.velocity[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const float g = clip * p.grad[k] + config.weight_decay * p.value[k];
      v[k] = config.momentum * v[k] + g;
      p.value[k] -= config.learning_rate * v[k];
    }
  }
}

}  // namespace tenet
