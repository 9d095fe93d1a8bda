#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "oracles.hpp"
#include "samlab/rng.hpp"
#include "samlab/tensor.hpp"

using namespace samlab;

namespace {

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("construction validates shape, size and finiteness") {
  CHECK_THROWS_AS(Tensor(Shape{2, 3}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor(Shape{0}, {}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::vector({1.0, std::nan("")}), std::runtime_error);
  CHECK_THROWS_AS(Tensor::vector({1.0, INFINITY}), std::runtime_error);
  const Tensor t = Tensor::scalar(3.5);
  CHECK(t.size() == 1);
  CHECK(t.item() == 3.5);
}

TEST_CASE("relu value follows the definition") {
  const Tensor x = Tensor::vector({-1.0, 0.0, 2.0});
  const Tensor y = ops::relu(x);
  CHECK(to_vec(y.values()) == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("matmul matches the naive triple-loop oracle on random operands") {
  Rng rng(11);
  std::vector<double> a(2 * 3), b(3 * 1);
  for (auto& v : a) v = rng.uniform(-2.0, 2.0);
  for (auto& v : b) v = rng.uniform(-2.0, 2.0);
  const Tensor product = ops::matmul(Tensor::matrix(2, 3, a), Tensor::matrix(3, 1, b));
  const std::vector<double> expected = oracles::naive_matmul(a, b, 2, 3, 1);
  CHECK(oracles::max_relative_error(to_vec(product.values()), expected) < 1e-15);

  // Larger case, both rank-2 and the vector right-hand form.
  std::vector<double> c(7 * 5), d(5 * 4);
  for (auto& v : c) v = rng.uniform(-1.0, 1.0);
  for (auto& v : d) v = rng.uniform(-1.0, 1.0);
  const Tensor cd = ops::matmul(Tensor::matrix(7, 5, c), Tensor::matrix(5, 4, d));
  CHECK(oracles::max_relative_error(to_vec(cd.values()),
                                    oracles::naive_matmul(c, d, 7, 5, 4)) < 1e-14);
  std::vector<double> v5(5);
  for (auto& v : v5) v = rng.uniform(-1.0, 1.0);
  const Tensor cv = ops::matmul(Tensor::matrix(7, 5, c), Tensor::vector(v5));
  CHECK(oracles::max_relative_error(to_vec(cv.values()),
                                    oracles::naive_matmul(c, v5, 7, 5, 1)) < 1e-14);
}

TEST_CASE("shape mismatches raise errors naming the primitive and both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({3, 2});
  CHECK_THROWS_WITH_AS(ops::add(a, b), "add: operand shapes (2x3) and (3x2) do not conform",
                       std::invalid_argument);
  CHECK_THROWS_AS(ops::multiply(a, b), std::invalid_argument);
  CHECK_THROWS_AS(ops::matmul(a, Tensor::zeros({2, 2})), std::invalid_argument);
  CHECK_THROWS_AS(ops::subtract(a, Tensor::zeros({2, 2})), std::invalid_argument);
}

TEST_CASE("non-finite primitive output is flagged") {
  const Tensor big = Tensor::full({2}, 1e308);
  CHECK_THROWS_AS(ops::add(big, big), std::runtime_error);
  CHECK_THROWS_AS(ops::multiply(big, big), std::runtime_error);
}

TEST_CASE("backward of w.w at w=3 gives 6") {
  const Tensor w = Tensor::vector({3.0}, /*requires_grad=*/true);
  Tape tape;
  const Tensor y = ops::l2_squared(w);
  const Gradients grads = tape.backward(y);
  CHECK(grads.at(w)[0] == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(w.grad()[0] == 6.0);
}

TEST_CASE("backward validates its output argument") {
  const Tensor w = Tensor::vector({1.0, 2.0}, true);
  Tape tape;
  const Tensor y = ops::scalar_multiply(2.0, w);  // not a scalar
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);

  const Tensor elsewhere = Tensor::scalar(1.0);
  CHECK_THROWS_AS(tape.backward(elsewhere), std::invalid_argument);
}

TEST_CASE("relu gradient at exactly 0 is 0") {
  const Tensor x = Tensor::vector({-1.0, 0.0, 2.0}, true);
  Tape tape;
  const Tensor y = ops::sum(ops::relu(x));
  const Gradients grads = tape.backward(y);
  const auto g = grads.at(x);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 1.0);
}

TEST_CASE("tensors recorded but off the output path get zero gradients") {
  const Tensor used = Tensor::vector({2.0}, true);
  const Tensor unused = Tensor::vector({5.0}, true);
  Tape tape;
  const Tensor y = ops::l2_squared(used);
  ops::l2_squared(unused);  // recorded, not connected to y
  const Gradients grads = tape.backward(y);
  CHECK(grads.at(unused)[0] == 0.0);
  CHECK(grads.at(used)[0] == 4.0);
}

namespace {

// A small random two-layer perceptron loss built from the primitives, with
// all parameters packed in one flat vector so the finite-difference oracle
// can drive it.
struct PackedMlp {
  std::size_t in, hidden, out, batch;
  std::vector<double> x;
  std::vector<int> labels;

  std::size_t param_count() const { return in * hidden + hidden + hidden * out + out; }

  double loss_at(const std::vector<double>& theta) const {
    auto tensors = unpack(theta, false);
    return build(tensors).item();
  }

  std::vector<Tensor> unpack(const std::vector<double>& theta, bool requires_grad) const {
    std::size_t offset = 0;
    const auto take = [&](Shape shape) {
      const std::size_t count = shape_size(shape);
      std::vector<double> values(theta.begin() + offset, theta.begin() + offset + count);
      offset += count;
      return Tensor(std::move(shape), std::move(values), requires_grad);
    };
    std::vector<Tensor> tensors;
    tensors.push_back(take({in, hidden}));
    tensors.push_back(take({hidden}));
    tensors.push_back(take({hidden, out}));
    tensors.push_back(take({out}));
    return tensors;
  }

  Tensor build(const std::vector<Tensor>& params) const {
    const Tensor input = Tensor::matrix(batch, in, x);
    Tensor h = ops::tanh(ops::add(ops::matmul(input, params[0]), params[1]));
    Tensor logits = ops::add(ops::matmul(h, params[2]), params[3]);
    return ops::mean(ops::cross_entropy_with_logits(logits, labels));
  }
};

PackedMlp random_mlp(Rng& rng) {
  PackedMlp mlp;
  mlp.in = 1 + rng.next_below(6);
  mlp.hidden = 1 + rng.next_below(16);
  mlp.out = 2 + rng.next_below(3);
  mlp.batch = 1 + rng.next_below(8);
  mlp.x.resize(mlp.batch * mlp.in);
  for (auto& v : mlp.x) v = rng.uniform(-2.0, 2.0);
  mlp.labels.resize(mlp.batch);
  for (auto& label : mlp.labels) label = static_cast<int>(rng.next_below(mlp.out));
  return mlp;
}

}  // namespace

TEST_CASE("two-layer perceptron gradient matches central finite differences") {
  Rng rng(7);
  PackedMlp mlp = random_mlp(rng);
  std::vector<double> theta(mlp.param_count());
  for (auto& v : theta) v = rng.uniform(-0.8, 0.8);

  auto params = mlp.unpack(theta, true);
  Tape tape;
  const Tensor loss = mlp.build(params);
  const Gradients grads = tape.backward(loss);

  std::vector<double> analytic;
  for (const Tensor& p : params) {
    const auto g = grads.at(p);
    analytic.insert(analytic.end(), g.begin(), g.end());
  }
  const std::vector<double> numeric = oracles::finite_difference_grad(
      [&](const std::vector<double>& t) { return mlp.loss_at(t); }, theta);
  CHECK(oracles::max_relative_error(analytic, numeric) < 1e-4);
}

TEST_CASE("gradient check passes on 100 randomly seeded small graphs") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    PackedMlp mlp = random_mlp(rng);
    std::vector<double> theta(mlp.param_count());
    for (auto& v : theta) v = rng.uniform(-0.8, 0.8);

    auto params = mlp.unpack(theta, true);
    Tape tape;
    const Tensor loss = mlp.build(params);
    const Gradients grads = tape.backward(loss);
    std::vector<double> analytic;
    for (const Tensor& p : params) {
      const auto g = grads.at(p);
      analytic.insert(analytic.end(), g.begin(), g.end());
    }
    const std::vector<double> numeric = oracles::finite_difference_grad(
        [&](const std::vector<double>& t) { return mlp.loss_at(t); }, theta);
    const double err = oracles::max_relative_error(analytic, numeric);
    CAPTURE(seed);
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("backward is linear in the output: grad of c*f is c times grad of f") {
  Rng rng(3);
  std::vector<double> values(6);
  for (auto& v : values) v = rng.uniform(-1.0, 1.0);

  const auto grad_of = [&](double c) {
    const Tensor w = Tensor::matrix(2, 3, values, true);
    Tape tape;
    Tensor f = ops::l2_squared(ops::tanh(w));
    if (c != 1.0) f = ops::scalar_multiply(c, f);
    return to_vec(tape.backward(f).at(w));
  };

  const std::vector<double> base = grad_of(1.0);
  // Power-of-two scalars commute exactly with rounding, so equality is
  // bitwise there.
  for (double c : {2.0, 0.5, 4.0}) {
    const std::vector<double> scaled = grad_of(c);
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(scaled[i] == c * base[i]);
  }
  const std::vector<double> scaled = grad_of(1.7);
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(scaled[i] == doctest::Approx(1.7 * base[i]).epsilon(1e-14));
  }
}

TEST_CASE("identical seeds give bitwise-identical values and gradients") {
  const auto run = [] {
    Rng rng(99);
    PackedMlp mlp = random_mlp(rng);
    std::vector<double> theta(mlp.param_count());
    for (auto& v : theta) v = rng.uniform(-0.8, 0.8);
    auto params = mlp.unpack(theta, true);
    Tape tape;
    const Tensor loss = mlp.build(params);
    const Gradients grads = tape.backward(loss);
    std::vector<double> flat{loss.item()};
    for (const Tensor& p : params) {
      const auto g = grads.at(p);
      flat.insert(flat.end(), g.begin(), g.end());
    }
    return flat;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("cross entropy handles the binary single-logit form") {
  // ln(1 + e^-s) for the positive class, ln(1 + e^s) for the negative.
  const Tensor s = Tensor::vector({1.25, -0.5});
  const Tensor per_row = ops::cross_entropy_with_logits(s, {1, 0});
  CHECK(per_row.values()[0] == doctest::Approx(std::log1p(std::exp(-1.25))).epsilon(1e-14));
  CHECK(per_row.values()[1] == doctest::Approx(std::log1p(std::exp(-0.5))).epsilon(1e-14));
  CHECK_THROWS_AS(ops::cross_entropy_with_logits(s, {2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(ops::cross_entropy_with_logits(s, {1}), std::invalid_argument);
}

TEST_CASE("cross entropy is stable for extreme logits") {
  const Tensor logits = Tensor::matrix(2, 2, {1000.0, -1000.0, -1000.0, 1000.0});
  const Tensor per_row = ops::cross_entropy_with_logits(logits, {0, 0});
  CHECK(per_row.values()[0] == doctest::Approx(0.0));
  CHECK(per_row.values()[1] == doctest::Approx(2000.0));
}

TEST_CASE("bias broadcast add follows rows and accumulates bias gradient") {
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}, true);
  const Tensor bias = Tensor::vector({10, 20, 30}, true);
  Tape tape;
  const Tensor out = ops::add(m, bias);
  CHECK(to_vec(out.values()) == std::vector<double>{11, 22, 33, 14, 25, 36});
  const Gradients grads = tape.backward(ops::sum(out));
  CHECK(to_vec(grads.at(bias)) == std::vector<double>{2, 2, 2});
  CHECK(to_vec(grads.at(m)) == std::vector<double>(6, 1.0));
}
