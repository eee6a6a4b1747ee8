#include "latentdr/tape.hpp"

#include <algorithm>

#include "latentdr/errors.hpp"

namespace latentdr {

const Tensor& Var::value() const { return tape_->value(id_); }

std::span<const double> Var::grad() const { return tape_->grad(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  value.set_requires_grad(false);
  return push(Node{std::move(value), {}, nullptr, false, false, {}});
}

Var Tape::leaf(Tensor value) {
  value.set_requires_grad(false);
  return push(Node{std::move(value), {}, nullptr, true, false, {}});
}

Var Tape::param(Parameter& parameter) {
  return push(Node{parameter.tensor.detached(), {}, &parameter, true, false, {}});
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Adjoint adjoint) {
  bool needs_grad = false;
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw InvariantError("op input recorded on a different tape");
    needs_grad = needs_grad || nodes_[in.id_].requires_grad;
  }
  value.set_requires_grad(false);
  if (!needs_grad) adjoint = nullptr;
  return push(Node{std::move(value), std::move(adjoint), nullptr, needs_grad, false, {}});
}

std::span<const double> Tape::grad(std::size_t id) const {
  const Node& node = nodes_[id];
  if (!node.requires_grad) return {};
  if (node.grad.size() != node.value.size()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

std::span<double> Tape::accumulate_grad(Var v) {
  Node& node = nodes_[v.id_];
  if (!node.requires_grad) return {};
  if (!node.reached) {
    node.reached = true;
    node.grad.assign(node.value.size(), 0.0);
  }
  return node.grad;
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw InvariantError("backward root belongs to another tape");
  Node& root_node = nodes_[root.id_];
  if (root_node.value.size() != 1) {
    throw DimensionError("backward root must be a single element, got shape " +
                         shape_string(root_node.value.shape()));
  }
  if (!root_node.requires_grad) return;

  for (Node& node : nodes_) {
    node.reached = false;
    node.grad.clear();
  }
  visit_order_.clear();
  accumulate_grad(root)[0] = 1.0;

  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.reached) continue;
    visit_order_.push_back(i);
    if (node.adjoint) node.adjoint(*this, i);
  }

  for (Node& node : nodes_) {
    if (node.parameter == nullptr || !node.reached) continue;
    auto dst = node.parameter->tensor.grad();
    const auto& src = node.grad;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

}  // namespace latentdr
