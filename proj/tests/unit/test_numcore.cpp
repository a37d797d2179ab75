#include <doctest.h>

#include <cmath>
#include <vector>

#include "cavq/autodiff.hpp"
#include "cavq/errors.hpp"
#include "cavq/grad_check.hpp"
#include "cavq/rng.hpp"
#include "cavq/tensor.hpp"
#include "helpers.hpp"

using namespace cavq;
using testutil::random_tensor;

namespace {

// Naive triple loop written independently of the kernels.
Tensor reference_matmul(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double acc = 0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += static_cast<long double>(a(i, p)) * b(p, j);
      c(i, j) = static_cast<double>(acc);
    }
  }
  return c;
}

double max_rel(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-12});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul examples") {
  const Tensor b = Tensor::from_rows({{1.5, -2.0, 3.0}, {0.25, 7.0, -1.0}});
  CHECK(kernels::matmul(Tensor::identity(2), b) == b);
  CHECK(kernels::matmul(Tensor(2, 2), b) == Tensor(2, 3));
  CHECK(kernels::matmul(Tensor::from_rows({{1, 2}, {3, 4}}), Tensor::from_rows({{5, 6}, {7, 8}})) ==
        Tensor::from_rows({{19, 22}, {43, 50}}));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  const Var a = tape.constant(Tensor(2, 3));
  const Var b = tape.constant(Tensor(2, 3));
  try {
    tape.matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x3]", msg.find("[2x3]") + 1) != std::string::npos);
  }
}

TEST_CASE("matmul kernels agree with a naive reference") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(9), n = 1 + rng.below(7);
    const Tensor a = random_tensor(m, k, rng), b = random_tensor(k, n, rng), bt = random_tensor(n, k, rng);
    const Tensor at = random_tensor(k, m, rng);
    CHECK(max_rel(kernels::matmul(a, b), reference_matmul(a, b)) < 1e-14);
    CHECK(max_rel(kernels::matmul_nt(a, bt), reference_matmul(a, kernels::transpose(bt))) < 1e-14);
    CHECK(max_rel(kernels::matmul_tn(at, b), reference_matmul(kernels::transpose(at), b)) < 1e-14);
  }
}

TEST_CASE("matmul rows do not depend on the batch they are computed in") {
  Rng rng(3);
  const Tensor a = random_tensor(9, 13, rng), b = random_tensor(13, 5, rng);
  const Tensor full = kernels::matmul(a, b);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const Tensor one = kernels::matmul(Tensor::row(a.row_span(r)), b);
    for (std::size_t c = 0; c < b.cols(); ++c) CHECK(one(0, c) == full(r, c));
  }
}

TEST_CASE("matmul associativity on random 3-chains") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(5), k = 1 + rng.below(5), l = 1 + rng.below(5), n = 1 + rng.below(5);
    const Tensor a = random_tensor(m, k, rng), b = random_tensor(k, l, rng), c = random_tensor(l, n, rng);
    const Tensor left = kernels::matmul(kernels::matmul(a, b), c);
    const Tensor right = kernels::matmul(a, kernels::matmul(b, c));
    // Relative to the magnitude of the terms, since single entries may cancel.
    double scale = 0.0;
    for (double v : left.data()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < left.size(); ++i) CHECK(std::abs(left[i] - right[i]) <= 1e-10 * std::max(scale, 1.0));
  }
}

TEST_CASE("add") {
  Tape tape;
  const Tensor a = Tensor::from_rows({{1, 2}});
  CHECK(tape.value(tape.add(tape.constant(a), tape.constant(Tensor(1, 2)))) == a);
  CHECK(tape.value(tape.add(tape.constant(a), tape.constant(Tensor::from_rows({{3, 4}})))) ==
        Tensor::from_rows({{4, 6}}));
  CHECK_THROWS_AS(tape.add(tape.constant(a), tape.constant(Tensor(2, 1))), DimensionError);

  Rng rng(5);
  const Tensor other = random_tensor(2, 3, rng);
  const auto f = [&](Tape& t, Var x) { return t.sum(t.relu(t.add(x, t.constant(other)))); };
  Tensor x = random_tensor(2, 3, rng);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = other[i] > 0 ? std::abs(x[i]) + 0.5 : x[i];
  CHECK(grad_check(f, x, 1e-6).max_relative_error < 1e-6);
}

TEST_CASE("relu forward and backward") {
  Tape tape;
  const Var x = tape.variable(Tensor::from_rows({{-1, 0, 2}}));
  const Var y = tape.relu(x);
  CHECK(tape.value(y) == Tensor::from_rows({{0, 0, 2}}));
  tape.backward(tape.sum(y));
  CHECK(tape.grad(x) == Tensor::from_rows({{0, 0, 1}}));

  Tape neg;
  const Var n = neg.variable(Tensor::from_rows({{-3, -0.5, -7}}));
  const Var out = neg.relu(n);
  CHECK(neg.value(out) == Tensor(1, 3));
  neg.backward(neg.sum(out));
  CHECK(neg.grad(n) == Tensor(1, 3));
}

TEST_CASE("relu gradient away from the kink") {
  Rng rng(17);
  const Tensor w = random_tensor(4, 3, rng);
  const auto f = [&](Tape& t, Var x) { return t.sum(t.matmul(t.relu(x), t.constant(w))); };
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor(2, 4, rng);
    for (double& v : x.data()) {
      if (std::abs(v) <= 1e-3) v = 0.5;
    }
    CHECK(grad_check(f, x, 1e-6).max_relative_error < 1e-4);
  }
}

TEST_CASE("concat") {
  Tape tape;
  const Var a = tape.variable(Tensor::from_rows({{1, 2}}));
  const Var b = tape.variable(Tensor::from_rows({{3}}));
  const Var c = tape.concat(a, b);
  CHECK(tape.value(c) == Tensor::from_rows({{1, 2, 3}}));
  const Var weights = tape.constant(Tensor::from_rows({{10}, {20}, {30}}));
  tape.backward(tape.sum(tape.matmul(c, weights)));
  CHECK(tape.grad(a) == Tensor::from_rows({{10, 20}}));
  CHECK(tape.grad(b) == Tensor::from_rows({{30}}));

  const Tensor x = Tensor::from_rows({{4, 5}, {6, 7}});
  CHECK(tape.value(tape.concat(tape.constant(x), tape.constant(Tensor(2, 0)))) == x);
  CHECK_THROWS_AS(tape.concat(tape.constant(x), tape.constant(Tensor(3, 1))), DimensionError);
}

TEST_CASE("softmax cross-entropy values") {
  const std::vector<std::size_t> label0{0}, label1{1}, label3{3};
  {
    Tape tape;
    const Var l = tape.softmax_cross_entropy(tape.constant(Tensor(1, 4, 0.7)), label3);
    CHECK(tape.value(l)[0] == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    CHECK(std::abs(tape.value(l)[0] - 1.386294) < 1e-6);
  }
  {
    Tape tape;
    const Var l = tape.softmax_cross_entropy(tape.constant(Tensor::from_rows({{100, 0, 0}})), label0);
    CHECK(tape.value(l)[0] < 1e-8);
  }
  {
    Tape tape;
    const Var l = tape.softmax_cross_entropy(tape.constant(Tensor::from_rows({{1.0, 2.0}})), label1);
    const double direct = -std::log(std::exp(2.0) / (std::exp(1.0) + std::exp(2.0)));
    CHECK(std::abs(tape.value(l)[0] - direct) < 1e-15);
  }
  {
    Tape tape;
    const std::vector<std::size_t> bad{2};
    CHECK_THROWS_AS(tape.softmax_cross_entropy(tape.constant(Tensor(1, 2)), bad), IndexError);
    CHECK_THROWS_AS(tape.softmax_cross_entropy(tape.constant(Tensor(1, 1)), label0), ContractError);
  }
}

TEST_CASE("softmax cross-entropy gradient is softmax minus one-hot") {
  Rng rng(23);
  const Tensor logits = random_tensor(3, 5, rng, 3.0);
  const std::vector<std::size_t> labels{4, 0, 2};
  Tape tape;
  const Var z = tape.variable(logits);
  tape.backward(tape.softmax_cross_entropy(z, labels));
  for (std::size_t r = 0; r < 3; ++r) {
    double denom = 0.0;
    for (std::size_t c = 0; c < 5; ++c) denom += std::exp(logits(r, c));
    for (std::size_t c = 0; c < 5; ++c) {
      const double expected = (std::exp(logits(r, c)) / denom - (c == labels[r] ? 1.0 : 0.0)) / 3.0;
      CHECK(std::abs(tape.grad(z)(r, c) - expected) < 1e-15);
    }
  }
  const auto f = [&](Tape& t, Var x) { return t.softmax_cross_entropy(x, labels); };
  CHECK(grad_check(f, logits, 1e-6).max_relative_error < 1e-6);
}

TEST_CASE("backward contracts") {
  Tape tape;
  const Var x = tape.variable(Tensor::from_rows({{1, 2}}));
  CHECK_THROWS_AS(tape.backward(x), ContractError);

  const Var c = tape.constant(Tensor(1, 1, 5.0));
  tape.backward(c);
  CHECK(tape.grad(x) == Tensor(1, 2));
  CHECK_THROWS_AS(tape.grad(c), ContractError);
}

TEST_CASE("d sum(xW)/dW matches finite differences") {
  Rng rng(29);
  const Tensor x = random_tensor(3, 4, rng);
  const auto f = [&](Tape& t, Var w) { return t.sum(t.matmul(t.constant(x), w)); };
  const GradCheckResult r = grad_check(f, random_tensor(4, 2, rng), 1e-5);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("fan-out gradient equals the sum of single-path gradients") {
  Rng rng(31);
  const Tensor x0 = random_tensor(2, 3, rng), w1 = random_tensor(3, 2, rng), w2 = random_tensor(3, 2, rng);

  Tape shared;
  const Var x = shared.variable(x0);
  const Var a = shared.relu(shared.matmul(x, shared.constant(w1)));
  const Var b = shared.matmul(x, shared.constant(w2));
  shared.backward(shared.sum(shared.add(a, b)));

  Tape split;
  const Var xa = split.variable(x0), xb = split.variable(x0);
  const Var sa = split.relu(split.matmul(xa, split.constant(w1)));
  const Var sb = split.matmul(xb, split.constant(w2));
  split.backward(split.sum(split.add(sa, sb)));

  for (std::size_t i = 0; i < x0.size(); ++i) {
    CHECK(shared.grad(x)[i] == split.grad(xa)[i] + split.grad(xb)[i]);
  }
}

TEST_CASE("repeated backward does not double-count") {
  Tape tape;
  const Var x = tape.variable(Tensor::from_rows({{1, 2}}));
  const Var loss = tape.sum(tape.scale(x, 3.0));
  tape.backward(loss);
  tape.backward(loss);
  CHECK(tape.grad(x) == Tensor::from_rows({{3, 3}}));
}

TEST_CASE("grad_check") {
  Rng rng(37);
  const Tensor w = random_tensor(3, 1, rng);
  const auto linear = [&](Tape& t, Var x) { return t.sum(t.scale(t.matmul(x, t.constant(w)), 2.5)); };
  CHECK(grad_check(linear, random_tensor(4, 3, rng), 1e-5).max_relative_error < 1e-7);
  CHECK_THROWS_AS(grad_check(linear, random_tensor(4, 3, rng), 0.0), ContractError);

  const auto flat = [&](Tape& t, Var x) { return t.sum(t.relu(t.scale(x, -1.0))); };
  CHECK(grad_check(flat, Tensor(1, 3, 1.0), 1e-5).max_relative_error == 0.0);
  const std::vector<std::size_t> only{1};
  const GradCheckResult r = grad_check(linear, random_tensor(4, 3, rng), 1e-5, std::span<const std::size_t>(only));
  CHECK(r.worst_index == 1);
}

TEST_CASE("composites built from every op pass grad_check at random points") {
  Rng rng(41);
  const Tensor w1 = random_tensor(4, 3, rng), w3 = random_tensor(4, 3, rng), w2 = random_tensor(6, 3, rng);
  const std::vector<std::size_t> labels{1, 2};
  const auto f = [&](Tape& t, Var x) {
    const Var h = t.relu(t.matmul(x, t.constant(w1)));
    const Var mixed = t.add(t.matmul(x, t.constant(w3)), t.scale(h, 0.5));
    const Var logits = t.matmul(t.concat(h, mixed), t.constant(w2));
    return t.add(t.softmax_cross_entropy(logits, labels), t.sum(t.scale(mixed, 0.1)));
  };
  int probed = 0;
  for (int trial = 0; trial < 100 && probed < 10; ++trial) {
    const Tensor x = random_tensor(2, 4, rng);
    bool near_kink = false;
    const Tensor pre = kernels::matmul(x, w1);
    for (double v : pre.data()) near_kink = near_kink || std::abs(v) < 1e-3;
    if (near_kink) continue;
    ++probed;
    CHECK(grad_check(f, x, 1e-6).max_relative_error < 1e-3);
  }
  CHECK(probed == 10);
}

TEST_CASE("forward ops keep finite inputs finite") {
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    Tape t;
    const Var x = t.constant(random_tensor(3, 4, rng, 50.0));
    const Var w = t.constant(random_tensor(4, 5, rng, 50.0));
    const Var h = t.relu(t.matmul(x, w));
    const std::vector<std::size_t> labels{0, 1, 4};
    const Var loss = t.softmax_cross_entropy(t.add(h, t.scale(h, -2.0)), labels);
    CHECK(t.value(h).all_finite());
    CHECK(t.value(loss).all_finite());
    CHECK(t.value(t.concat(h, x)).all_finite());
  }
}

TEST_CASE("rng transforms") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(7) < 7);
  }
  const auto before = r.draws();
  r.normal();
  CHECK(r.draws() == before + 2);
  CHECK(derive_seed(5, 1) != derive_seed(5, 2));
  CHECK(derive_seed(5, 1) != derive_seed(6, 1));
  CHECK(derive_seed(5, 1) == derive_seed(5, 1));
}

TEST_CASE("normal draws have unit variance") {
  Rng r(2024);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(sq / n - mean * mean - 1.0) < 0.02);
}
