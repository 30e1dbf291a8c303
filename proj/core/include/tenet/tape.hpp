#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tenet/tensor.hpp"

namespace tenet {

/// Misuse of a tape: backward on a consumed tape, non-scalar loss, or mixing
/// handles from different tapes.
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A trainable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor::zeros(value.shape()); }
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// is alive and has not been reset.
class Var {
 public:
  Var() = default;

  /// The returned reference is invalidated when further ops are recorded.
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  /// Gradient of the last backward pass, or nullptr when none reached it.
  const Tensor* grad() const;

  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode record of one forward computation.
///
/// Every differentiable op appends a node holding its output and a backward
/// rule. backward() walks the nodes in exact reverse order of recording,
/// pushing gradients into tracked inputs. Parameters bound with parameter()
/// receive their gradient in Parameter::grad when backward completes. A tape
/// accepts one backward pass; reset() clears it for reuse.
class Tape {
 public:
  /// Propagates the output gradient of node `self` into its inputs.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(std::int64_t step = -1) : step_(step) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);
  Var parameter(Parameter& param);

  /// Appends an op result. `inputs` determine whether the result is tracked;
  /// `backward` is dropped when no input is tracked.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);

  /// Gradient buffer for `v`, zero-initialised on first use, or nullptr when
  /// `v` is not tracked.
  Tensor* grad_sink(const Var& v);

  void backward(const Var& loss);
  void reset();

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }
  std::int64_t step() const { return step_; }

 private:
  friend class Var;

  struct Node {
    std::string op;
    Tensor value;
    std::optional<Tensor> grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  const Node& node(const Var& v) const;
  Var push(Node node);
  void check_writable() const;

  std::vector<Node> nodes_;
  std::int64_t step_;
  bool consumed_ = false;
};

}  // namespace tenet
