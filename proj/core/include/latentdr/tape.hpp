#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "latentdr/tensor.hpp"

namespace latentdr {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
class Var {
 public:
  Var() = default;

  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
  [[nodiscard]] std::span<const double> grad() const;
  [[nodiscard]] bool requires_grad() const;
  [[nodiscard]] Tape& tape() const noexcept { return *tape_; }
  [[nodiscard]] std::size_t id() const noexcept { return id_; }
  [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) noexcept : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode computation tape for one forward/backward pass.
///
/// Nodes are appended in forward order. `backward` seeds d(root)/d(root) = 1
/// and walks the nodes in exact reverse order of recording; each node's
/// adjoint closure adds into the gradients of its inputs. Parameter leaves
/// then flush their gradients into the owning Parameter (accumulating, so
/// several tapes can contribute before an optimizer step).
class Tape {
 public:
  /// Adjoint of one node. Reads the node's own gradient and accumulates into
  /// its inputs through `Tape::accumulate_grad`.
  using Adjoint = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var constant(Tensor value);
  /// Free leaf that receives a gradient (used for input sensitivities).
  Var leaf(Tensor value);
  /// Leaf bound to a Parameter; its gradient is flushed into the parameter.
  Var param(Parameter& parameter);

  /// Records an op output. The output requires a gradient iff any input does;
  /// the adjoint is discarded otherwise.
  Var record(Tensor value, std::span<const Var> inputs, Adjoint adjoint);

  /// Runs reverse mode from a single-element root.
  void backward(Var root);

  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] std::span<const double> grad(std::size_t id) const;
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Mutable gradient of `v` for adjoint closures; marks the node reached.
  /// Empty when `v` does not require a gradient.
  std::span<double> accumulate_grad(Var v);

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
  /// Node ids visited by the most recent backward, in visit order.
  [[nodiscard]] const std::vector<std::size_t>& last_backward_order() const noexcept {
    return visit_order_;
  }

 private:
  struct Node {
    Tensor value;
    Adjoint adjoint;
    Parameter* parameter = nullptr;
    bool requires_grad = false;
    bool reached = false;
    // Allocated on first use; most nodes of a pass never need one.
    mutable Buffer grad;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_order_;
};

}  // namespace latentdr
