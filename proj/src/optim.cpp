#include "cavq/optim.hpp"

#include <cmath>

#include "cavq/errors.hpp"

namespace cavq {

void AdamW::step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                 std::span<const std::string> names) {
  if (params.size() != grads.size()) throw ContractError("adamw: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = i < names.size() ? names[i] : "param[" + std::to_string(i) + "]";
    if (!params[i]->same_shape(*grads[i])) {
      throw DimensionError("adamw: gradient shape " + grads[i]->shape_string() + " does not match " + name + " " +
                           params[i]->shape_string());
    }
    if (!grads[i]->all_finite()) throw TrainingError("adamw: non-finite gradient for " + name);
  }
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  } else if (m_.size() != params.size()) {
    throw ContractError("adamw: parameter count changed between steps");
  }

  ++t_;
  const double beta1 = config_.beta1, beta2 = config_.beta2;
  const double lr = config_.learning_rate, eps = config_.epsilon, wd = config_.weight_decay;
  const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* theta = params[i]->data().data();
    const double* g = grads[i]->data().data();
    double* m = m_[i].data().data();
    double* v = v_[i].data().data();
    const std::size_t count = params[i]->size();
    for (std::size_t k = 0; k < count; ++k) {
      m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      theta[k] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * theta[k]);
    }
  }
}

}  // namespace cavq
