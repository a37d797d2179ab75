#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cavq/tensor.hpp"

namespace cavq {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode computation tape.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward() is a single reverse sweep. A tape is
/// single-threaded and meant to be rebuilt for every forward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that owns its value and never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that owns its value and receives a gradient.
  Var variable(Tensor value);
  /// Leaf that refers to an external tensor. The tensor must outlive the tape.
  Var watch(const Tensor& value, bool requires_grad);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var scale(Var a, double factor);
  Var relu(Var x);
  /// Column-wise concatenation of two matrices with equal row counts.
  Var concat(Var a, Var b);
  /// Sum of all entries, as a 1x1 value.
  Var sum(Var x);
  /// Mean over rows of -log softmax(logits[r])[labels[r]], as a 1x1 value.
  /// Max-subtraction keeps large logits stable.
  Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  /// Gradient from the last backward() call; zeros before any call. Only
  /// nodes that require a gradient have one.
  const Tensor& grad(Var v) const;

  /// Accumulates d(loss)/d(node) into every node that requires a gradient.
  /// Calling it again first clears gradients from the previous call.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    // Receives this node's upstream gradient and pushes contributions into
    // the inputs' gradients.
    std::function<void(Tape&, const Tensor&)> backward;
    Tensor grad;
  };

  Var push(Node node);
  void check_id(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace cavq
