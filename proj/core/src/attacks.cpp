#include "tenet/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "tenet/ops.hpp"
#include "tenet/tape.hpp"

namespace tenet {

std::string to_string(AttackKind kind) {
  return kind == AttackKind::Fgsm ? "fgsm" : "pgd";
}

AttackKind parse_attack_kind(const std::string& text) {
  if (text == "fgsm") return AttackKind::Fgsm;
  if (text == "pgd") return AttackKind::Pgd;
  throw std::invalid_argument("unknown attack kind '" + text + "' (expected fgsm or pgd)");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0f && epsilon <= 1.0f)) {
    throw std::invalid_argument("attack epsilon must lie in [0, 1]");
  }
  if (kind == AttackKind::Pgd && steps < 1) {
    throw std::invalid_argument("pgd needs at least one step");
  }
  if (!(step_size >= 0.0f) || !std::isfinite(step_size)) {
    throw std::invalid_argument("attack step_size must be finite and non-negative");
  }
}

Tensor input_gradient(const ConvNet& model, const Tensor& x, std::span<const int> labels) {
  if (x.rank() != 4 || x.dim(0) != labels.size()) {
    throw DimensionError("input_gradient: batch " + to_string(x.shape()) + " with " +
                         std::to_string(labels.size()) + " labels");
  }
  Tape tape;
  const BoundParams bound = model.bind_frozen(tape);
  const Var input = tape.leaf(x);
  const Var logits = model.forward(bound, input);
  const Var loss = ops::sum(ops::softmax_cross_entropy_per_sample(logits, labels));
  tape.backward(loss);
  const Tensor* g = input.grad();
  return g != nullptr ? *g : Tensor::zeros(x.shape());
}

namespace {

float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

float clamp_to_ball(float v, float center, float eps) {
  const double c = center;
  const double e = eps;
  float lo = static_cast<float>(c - e);
  float hi = static_cast<float>(c + e);
  // float rounding of c -/+ e may land just outside the ball.
  while (c - static_cast<double>(lo) > e) lo = std::nextafter(lo, hi);
  while (static_cast<double>(hi) - c > e) hi = std::nextafter(hi, lo);
  lo = std::max(lo, 0.0f);
  hi = std::min(hi, 1.0f);
  return std::clamp(v, lo, hi);
}

void step_signed(Tensor& x_adv, const Tensor& grad, float step) {
  auto a = x_adv.data();
  auto g = grad.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += step * sign(g[i]);
}

}  // namespace

void project_linf(Tensor& candidate, const Tensor& x, float epsilon) {
  if (candidate.shape() != x.shape()) {
    throw DimensionError("project_linf: " + to_string(candidate.shape()) + " vs " +
                         to_string(x.shape()));
  }
  auto c = candidate.data();
  auto o = x.data();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = clamp_to_ball(c[i], o[i], epsilon);
}

Tensor fgsm(const ConvNet& model, const Tensor& x, std::span<const int> labels,
            float epsilon) {
  AttackConfig cfg;
  cfg.kind = AttackKind::Fgsm;
  cfg.epsilon = epsilon;
  cfg.validate();
  Tensor x_adv = x;
  step_signed(x_adv, input_gradient(model, x, labels), epsilon);
  project_linf(x_adv, x, epsilon);
  return x_adv;
}

Tensor pgd(const ConvNet& model, const Tensor& x, std::span<const int> labels,
           const AttackConfig& config, std::uint64_t seed) {
  config.validate();
  Tensor x_adv = x;
  if (config.random_start && config.epsilon > 0.0f) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> noise(-config.epsilon, config.epsilon);
    for (float& v : x_adv.data()) v += noise(rng);
    project_linf(x_adv, x, config.epsilon);
  }
  for (std::size_t k = 0; k < config.steps; ++k) {
    step_signed(x_adv, input_gradient(model, x_adv, labels), config.step_size);
    project_linf(x_adv, x, config.epsilon);
  }
  return x_adv;
}

Tensor attack(const ConvNet& model, const Tensor& x, std::span<const int> labels,
              const AttackConfig& config, std::uint64_t seed) {
  if (config.kind == AttackKind::Fgsm) return fgsm(model, x, labels, config.epsilon);
  return pgd(model, x, labels, config, seed);
}

}  // namespace tenet
