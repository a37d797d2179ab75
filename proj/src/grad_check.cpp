#include "cavq/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "cavq/errors.hpp"

namespace cavq {

namespace {

double evaluate(const TapeFunction& f, const Tensor& x) {
  Tape tape;
  Var in = tape.constant(x);
  const Tensor& out = tape.value(f(tape, in));
  if (out.size() != 1) throw ContractError("grad_check: function must return a scalar");
  return out[0];
}

}  // namespace

GradCheckResult grad_check(const TapeFunction& f, const Tensor& x, double eps,
                           std::optional<std::span<const std::size_t>> indices) {
  if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");

  Tape tape;
  Var in = tape.variable(x);
  Var out = f(tape, in);
  tape.backward(out);
  const Tensor analytic = tape.grad(in);

  std::vector<std::size_t> all;
  if (!indices) {
    all.resize(x.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  }
  std::span<const std::size_t> probe = indices ? *indices : std::span<const std::size_t>(all);

  GradCheckResult result;
  Tensor shifted = x;
  for (std::size_t i : probe) {
    if (i >= x.size()) throw IndexError("grad_check: probe index out of range");
    const double original = shifted[i];
    shifted[i] = original + eps;
    const double up = evaluate(f, shifted);
    shifted[i] = original - eps;
    const double down = evaluate(f, shifted);
    shifted[i] = original;

    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double err = std::abs(a - numeric) / denom;
    if (err >= result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
      result.analytic = a;
      result.numeric = numeric;
    }
  }
  return result;
}

}  // namespace cavq
