#include "tenet/tape.hpp"

namespace tenet {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw TapeError("use of an unbound Var");
  return tape_->node(*this).value;
}

bool Var::requires_grad() const {
  return tape_ != nullptr && tape_->node(*this).requires_grad;
}

const Tensor* Var::grad() const {
  if (tape_ == nullptr) return nullptr;
  const auto& g = tape_->node(*this).grad;
  return g ? &*g : nullptr;
}

const Tape::Node& Tape::node(const Var& v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw TapeError("Var does not belong to this tape");
  }
  return nodes_[v.id_];
}

void Tape::check_writable() const {
  if (consumed_) {
    throw TapeError("tape already consumed by backward; call reset() first");
  }
}

Var Tape::push(Node n) {
  check_writable();
  if (!n.value.all_finite()) throw NonFiniteError(n.op, step_);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  return push(Node{"constant", std::move(value), std::nullopt, false, nullptr, {}});
}

Var Tape::leaf(Tensor value) {
  return push(Node{"leaf", std::move(value), std::nullopt, true, nullptr, {}});
}

Var Tape::parameter(Parameter& param) {
  return push(Node{param.name, param.value, std::nullopt, true, &param, {}});
}

Var Tape::record(std::string_view op, Tensor value,
                 std::initializer_list<Var> inputs, BackwardFn backward) {
  bool tracked = false;
  for (const Var& in : inputs) {
    tracked = tracked || node(in).requires_grad;
  }
  Node n{std::string(op), std::move(value), std::nullopt, tracked, nullptr, {}};
  if (tracked) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor* Tape::grad_sink(const Var& v) {
  node(v);
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return nullptr;
  if (!n.grad) n.grad = Tensor::zeros(n.value.shape());
  return &*n.grad;
}

void Tape::backward(const Var& loss) {
  check_writable();
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw TapeError("backward needs a scalar loss, got shape " +
                    to_string(root.value.shape()));
  }
  consumed_ = true;
  if (!root.requires_grad) return;
  nodes_[loss.id_].grad = Tensor::ones(root.value.shape());

  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad) continue;
    if (n.backward) {
      // Inputs always precede their consumer, so the rule never touches
      // this node's own gradient.
      Tensor out_grad = std::move(*n.grad);
      n.backward(*this, out_grad);
      nodes_[i].grad = std::move(out_grad);
    }
  }

  for (Node& n : nodes_) {
    if (n.param == nullptr || !n.grad) continue;
    if (!n.grad->all_finite()) throw NonFiniteError("grad:" + n.op, step_);
    Parameter& p = *n.param;
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
    for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += (*n.grad)[k];
  }
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

}  // namespace tenet
