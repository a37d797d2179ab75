#pragma once

#include <functional>
#include <optional>
#include <span>

#include "cavq/autodiff.hpp"

namespace cavq {

/// Builds a scalar-valued graph from a single input variable.
using TapeFunction = std::function<Var(Tape&, Var)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the tape gradient of f at x against central differences.
///
/// Per entry the error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8);
/// the maximum over probed entries is returned. When `indices` is given only
/// those entries are probed.
GradCheckResult grad_check(const TapeFunction& f, const Tensor& x, double eps,
                           std::optional<std::span<const std::size_t>> indices = std::nullopt);

}  // namespace cavq
