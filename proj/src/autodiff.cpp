#include "cavq/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cavq/errors.hpp"

namespace cavq {

namespace {

void accumulate(Tensor& into, const Tensor& delta) {
  auto dst = into.data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var Tape::push(Node node) {
  if (node.requires_grad) {
    const Tensor& v = node.external ? *node.external : node.owned;
    node.grad = Tensor(v.rows(), v.cols());
  }
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

void Tape::check_id(Var v) const {
  if (v.id >= nodes_.size()) {
    throw ContractError("tape: variable " + std::to_string(v.id) + " is not on this tape");
  }
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::watch(const Tensor& value, bool requires_grad) {
  Node n;
  n.external = &value;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  check_id(v);
  const Node& n = nodes_[v.id];
  return n.external ? *n.external : n.owned;
}

const Tensor& Tape::grad(Var v) const {
  check_id(v);
  const Node& n = nodes_[v.id];
  if (!n.requires_grad) {
    throw ContractError("tape: variable " + std::to_string(v.id) + " does not require a gradient");
  }
  return n.grad;
}

Var Tape::matmul(Var a, Var b) {
  check_id(a);
  check_id(b);
  Node n;
  n.owned = kernels::matmul(value(a), value(b));
  n.inputs = {a.id, b.id};
  n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  n.backward = [a, b](Tape& t, const Tensor& up) {
    // dA = dC * B^T, dB = A^T * dC
    if (t.nodes_[a.id].requires_grad) accumulate(t.nodes_[a.id].grad, kernels::matmul_nt(up, t.value(b)));
    if (t.nodes_[b.id].requires_grad) accumulate(t.nodes_[b.id].grad, kernels::matmul_tn(t.value(a), up));
  };
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_id(a);
  check_id(b);
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb)) {
    throw DimensionError("add: shapes differ, " + va.shape_string() + " + " + vb.shape_string());
  }
  Node n;
  n.owned = va;
  accumulate(n.owned, vb);
  n.inputs = {a.id, b.id};
  n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  n.backward = [a, b](Tape& t, const Tensor& up) {
    if (t.nodes_[a.id].requires_grad) accumulate(t.nodes_[a.id].grad, up);
    if (t.nodes_[b.id].requires_grad) accumulate(t.nodes_[b.id].grad, up);
  };
  return push(std::move(n));
}

Var Tape::scale(Var a, double factor) {
  check_id(a);
  Node n;
  n.owned = value(a);
  for (double& v : n.owned.data()) v *= factor;
  n.inputs = {a.id};
  n.requires_grad = nodes_[a.id].requires_grad;
  n.backward = [a, factor](Tape& t, const Tensor& up) {
    auto g = t.nodes_[a.id].grad.data();
    auto u = up.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * u[i];
  };
  return push(std::move(n));
}

Var Tape::relu(Var x) {
  check_id(x);
  Node n;
  n.owned = value(x);
  for (double& v : n.owned.data()) v = v > 0.0 ? v : 0.0;
  n.inputs = {x.id};
  n.requires_grad = nodes_[x.id].requires_grad;
  n.backward = [x](Tape& t, const Tensor& up) {
    auto g = t.nodes_[x.id].grad.data();
    auto in = t.value(x).data();
    auto u = up.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) g[i] += u[i];
    }
  };
  return push(std::move(n));
}

Var Tape::concat(Var a, Var b) {
  check_id(a);
  check_id(b);
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.rows() != vb.rows()) {
    throw DimensionError("concat: leading dimensions differ, " + va.shape_string() + " | " +
                         vb.shape_string());
  }
  const std::size_t rows = va.rows(), p = va.cols(), q = vb.cols();
  Node n;
  n.owned = Tensor(rows, p + q);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < p; ++c) n.owned(r, c) = va(r, c);
    for (std::size_t c = 0; c < q; ++c) n.owned(r, p + c) = vb(r, c);
  }
  n.inputs = {a.id, b.id};
  n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  n.backward = [a, b, rows, p, q](Tape& t, const Tensor& up) {
    if (t.nodes_[a.id].requires_grad) {
      Tensor& g = t.nodes_[a.id].grad;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < p; ++c) g(r, c) += up(r, c);
    }
    if (t.nodes_[b.id].requires_grad) {
      Tensor& g = t.nodes_[b.id].grad;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < q; ++c) g(r, c) += up(r, p + c);
    }
  };
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  check_id(x);
  double total = 0.0;
  for (double v : value(x).data()) total += v;
  Node n;
  n.owned = Tensor(1, 1, total);
  n.inputs = {x.id};
  n.requires_grad = nodes_[x.id].requires_grad;
  n.backward = [x](Tape& t, const Tensor& up) {
    const double u = up[0];
    for (double& g : t.nodes_[x.id].grad.data()) g += u;
  };
  return push(std::move(n));
}

Var Tape::softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
  check_id(logits);
  const Tensor& z = value(logits);
  const std::size_t m = z.rows(), classes = z.cols();
  if (classes < 2) throw ContractError("softmax_cross_entropy: need at least 2 classes");
  if (labels.size() != m) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + z.shape_string());
  }
  if (m == 0) throw ContractError("softmax_cross_entropy: empty batch");
  for (std::size_t r = 0; r < m; ++r) {
    if (labels[r] >= classes) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                       " out of range for " + std::to_string(classes) + " classes");
    }
  }

  // Keep probabilities for the backward rule: softmax - one_hot.
  Tensor probs(m, classes);
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    double peak = z(r, 0);
    for (std::size_t c = 1; c < classes; ++c) peak = std::max(peak, z(r, c));
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs(r, c) = std::exp(z(r, c) - peak);
      denom += probs(r, c);
    }
    for (std::size_t c = 0; c < classes; ++c) probs(r, c) /= denom;
    total += std::log(denom) - (z(r, labels[r]) - peak);
  }

  Node n;
  n.owned = Tensor(1, 1, total / static_cast<double>(m));
  n.inputs = {logits.id};
  n.requires_grad = nodes_[logits.id].requires_grad;
  std::vector<std::size_t> label_copy(labels.begin(), labels.end());
  n.backward = [logits, probs = std::move(probs), label_copy = std::move(label_copy)](
                   Tape& t, const Tensor& up) {
    Tensor& g = t.nodes_[logits.id].grad;
    const double w = up[0] / static_cast<double>(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      for (std::size_t c = 0; c < probs.cols(); ++c) {
        const double target = c == label_copy[r] ? 1.0 : 0.0;
        g(r, c) += w * (probs(r, c) - target);
      }
    }
  };
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  check_id(loss);
  const Tensor& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward: loss must be a scalar, got " + lv.shape_string());
  }
  for (Node& n : nodes_) {
    if (n.requires_grad) n.grad.fill(0.0);
  }
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, n.grad);
  }
}

}  // namespace cavq
