#include "anuw/tape.hpp"

#include <algorithm>

namespace anuw {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = recording();
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  Node n;
  n.value = p.value();
  n.requires_grad = recording();
  n.param = &p;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (recording()) {
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](Var v) { return requires_grad(v); });
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (recording()) {
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](Var v) { return requires_grad(v); });
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

const Tensor& Tape::grad(Var v) const {
  auto& node = nodes_[v.id()];
  if (node.grad.empty() && !node.value.empty()) {
    // Unreached node: materialize zeros so callers always see the right shape.
    const_cast<Node&>(node).grad = Tensor(node.value.shape());
  }
  return node.grad;
}

Tensor& Tape::grad_buffer(Var v) {
  auto& node = nodes_[v.id()];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (!recording()) {
    throw std::logic_error("backward: tape was recorded in inference mode");
  }
  if (backward_done_) {
    throw std::logic_error("backward: tape has already been replayed");
  }
  auto& root = nodes_[loss.id()];
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     to_string(root.value.shape()));
  }
  backward_done_ = true;
  if (!root.requires_grad) return;
  grad_buffer(loss)[0] = 1.0;

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty()) continue;
    // Callbacks only write into earlier nodes' grads; nodes_ never grows here.
    if (node.backward) node.backward(*this, node.grad);
  }
  for (auto& node : nodes_) {
    if (node.param == nullptr || node.grad.empty()) continue;
    auto dst = node.param->grad().values();
    auto src = node.grad.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

}  // namespace anuw
