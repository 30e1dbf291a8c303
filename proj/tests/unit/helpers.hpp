#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tenet/convnet.hpp"
#include "tenet/ops.hpp"
#include "tenet/tape.hpp"
#include "tenet/tensor.hpp"

namespace testing {

using tenet::Shape;
using tenet::Tensor;
using tenet::Tape;
using tenet::Var;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo = -1.0f,
                            float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(shape);
  for (float& v : t.data()) v = dist(rng);
  return t;
}

/// Values drawn from [lo, hi] but kept at least `gap` away from zero, so
/// finite differences never straddle a relu kink.
inline Tensor away_from_zero(const Shape& shape, std::mt19937_64& rng, float gap) {
  Tensor t = random_tensor(shape, rng);
  for (float& v : t.data()) v = v < 0.0f ? v - gap : v + gap;
  return t;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("tenet_test_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

using OpFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Compares the autodiff gradient of sum(r * f(inputs)) for a fixed random
/// projection r against central differences. The projection is accumulated in
/// double so the float output rounding is the only error source. Returns, per
/// input, max |g - fd| / max |fd|.
inline std::vector<double> gradient_check(const OpFn& f, std::vector<Tensor> inputs,
                                          double h = 1e-3, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  Tensor r;
  std::vector<Tensor> grads;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
    Var out = f(tape, vars);
    r = random_tensor(out.shape(), rng, 0.5f, 1.5f);
    Var loss = tenet::ops::sum(tenet::ops::hadamard(out, tape.constant(r)));
    tape.backward(loss);
    for (const Var& v : vars) {
      grads.push_back(v.grad() ? *v.grad() : Tensor::zeros(v.shape()));
    }
  }
  auto project = [&](const std::vector<Tensor>& in) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : in) vars.push_back(tape.constant(t));
    const Tensor out = f(tape, vars).value();
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += static_cast<double>(r[i]) * out[i];
    return acc;
  };
  std::vector<double> errors;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const float orig = inputs[k][i];
      inputs[k][i] = static_cast<float>(orig + h);
      const double up = project(inputs);
      inputs[k][i] = static_cast<float>(orig - h);
      const double down = project(inputs);
      inputs[k][i] = orig;
      const double step = (static_cast<double>(static_cast<float>(orig + h)) -
                           static_cast<double>(static_cast<float>(orig - h)));
      const double fd = (up - down) / step;
      worst = std::max(worst, std::abs(fd - grads[k][i]));
      scale = std::max(scale, std::abs(fd));
    }
    errors.push_back(scale > 0.0 ? worst / scale : worst);
  }
  return errors;
}

inline tenet::ModelSpec tiny_spec(const std::string& text) { return tenet::parse_model_spec(text); }

}  // namespace testing
