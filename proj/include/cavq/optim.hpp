#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cavq/tensor.hpp"

namespace cavq {

struct AdamWConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  /// Updates each parameter tensor in place. `names` label parameters in
  /// error messages. Throws TrainingError on a non-finite gradient before
  /// touching any parameter.
  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
            std::span<const std::string> names = {});

  std::uint64_t step_count() const noexcept { return t_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }
  const AdamWConfig& config() const noexcept { return config_; }

 private:
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

}  // namespace cavq
