#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "samlab/models.hpp"
#include "samlab/optim.hpp"
#include "samlab/rng.hpp"
#include "samlab/tensor.hpp"

using namespace samlab;

namespace {

// One tape/backward round for an explicit scalar loss builder.
Gradients grads_of(const std::function<Tensor()>& build) {
  Tape tape;
  const Tensor loss = build();
  return tape.backward(loss);
}

Gradients constant_grads(Tensor& param, const std::vector<double>& g) {
  // Produce a Gradients map holding exactly g for param via a loss whose
  // gradient is g: sum(multiply(param, g)).
  Tape tape;
  const Tensor coeffs(param.shape(), std::vector<double>(g.begin(), g.end()));
  const Tensor loss = ops::sum(ops::multiply(param, coeffs));
  return tape.backward(loss);
}

}  // namespace

TEST_CASE("vanilla sgd step") {
  Tensor p = Tensor::vector({1.0}, true);
  const Gradients grads = constant_grads(p, {2.0});
  Sgd sgd({/*lr=*/0.1, /*momentum=*/0.0, /*weight_decay=*/0.0});
  std::vector<Tensor> params{p};
  sgd.step(params, grads);
  CHECK(p.values()[0] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("sgd momentum follows the two-step recurrence") {
  // Hand-rolled: v1 = 1, p1 = -0.1; v2 = 0.9 + 1 = 1.9, p2 = -0.1 - 0.19.
  Tensor p = Tensor::vector({0.0}, true);
  Sgd sgd({0.1, 0.9, 0.0});
  std::vector<Tensor> params{p};
  for (int step = 0; step < 2; ++step) {
    const Gradients grads = constant_grads(p, {1.0});
    sgd.step(params, grads);
  }
  CHECK(p.values()[0] == doctest::Approx(-0.29).epsilon(1e-15));
}

TEST_CASE("sgd fixed point at zero gradient without decay") {
  Tensor p = Tensor::vector({3.0, -4.0}, true);
  Sgd sgd({0.1, 0.0, 0.0});
  std::vector<Tensor> params{p};
  const Gradients grads = constant_grads(p, {0.0, 0.0});
  sgd.step(params, grads);
  CHECK(p.values()[0] == 3.0);
  CHECK(p.values()[1] == -4.0);
}

TEST_CASE("sgd weight decay adds twice lambda times the parameter") {
  Tensor p = Tensor::vector({2.0}, true);
  Sgd sgd({0.1, 0.0, 0.05});
  std::vector<Tensor> params{p};
  const Gradients grads = constant_grads(p, {0.0});
  sgd.step(params, grads);
  // g_total = 2*0.05*2 = 0.2; p = 2 - 0.1*0.2
  CHECK(p.values()[0] == doctest::Approx(1.98).epsilon(1e-15));
}

TEST_CASE("sgd flags non-finite gradients with the parameter index") {
  Tensor a = Tensor::vector({1.0}, true);
  Tensor b = Tensor::vector({1.0}, true);
  // Build grads for both, then poison b's entry via a crafted loss is not
  // possible (primitives reject non-finite values), so check the missing-
  // gradient path instead: only a participates in the loss.
  Tape tape;
  const Tensor loss = ops::l2_squared(a);
  const Gradients grads = tape.backward(loss);
  Sgd sgd({0.1, 0.0, 0.0});
  std::vector<Tensor> params{a, b};
  CHECK_THROWS_WITH_AS(sgd.step(params, grads), doctest::Contains("parameter 1"),
                       std::invalid_argument);
}

TEST_CASE("adam first step moves by lr/(1+eps_hat) under unit gradient") {
  Tensor p = Tensor::vector({0.5, -0.25, 4.0}, true);
  AdamConfig config;
  config.lr = 1e-3;
  Adam adam(config);
  std::vector<Tensor> params{p};
  const Gradients grads = constant_grads(p, {1.0, 1.0, 1.0});
  const std::vector<double> before(p.values().begin(), p.values().end());
  adam.step(params, grads);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(p.values()[i] - before[i] ==
          doctest::Approx(-1e-3 / (1.0 + config.eps_hat)).epsilon(1e-12));
  }
}

TEST_CASE("adam fixed point at zero gradient without decay") {
  Tensor p = Tensor::vector({1.5}, true);
  Adam adam(AdamConfig{});
  std::vector<Tensor> params{p};
  const Gradients grads = constant_grads(p, {0.0});
  adam.step(params, grads);
  adam.step(params, grads);
  CHECK(p.values()[0] == 1.5);
}

TEST_CASE("adam matches an independent scalar recurrence over several steps") {
  const double lr = 0.01, beta1 = 0.9, beta2 = 0.999, eps_hat = 1e-8;
  const double g = 0.7;
  Tensor p = Tensor::vector({2.0}, true);
  Adam adam({lr, beta1, beta2, eps_hat, 0.0});
  std::vector<Tensor> params{p};

  double expected = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    const Gradients grads = constant_grads(p, {g});
    adam.step(params, grads);
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g * g;
    const double m_hat = m / (1 - std::pow(beta1, t));
    const double v_hat = v / (1 - std::pow(beta2, t));
    expected -= lr * m_hat / (std::sqrt(v_hat) + eps_hat);
    CHECK(p.values()[0] == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("config validation rejects out-of-range fields") {
  CHECK_THROWS_AS(Sgd({-0.1, 0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(Sgd({0.1, 1.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(Sgd({0.1, 0.0, -1.0}), std::invalid_argument);
  AdamConfig bad;
  bad.beta2 = 1.0;
  CHECK_THROWS_AS(Adam{bad}, std::invalid_argument);
  SamConfig sam;
  sam.rho = -0.5;
  CHECK_THROWS_AS(sam.validate(), std::invalid_argument);
}

namespace {

// 1-D quadratic loss L(w) = w^2 through the tape.
std::function<Tensor()> quadratic_loss(Tensor& w) {
  return [&w] { return ops::l2_squared(w); };
}

}  // namespace

TEST_CASE("sharpness-aware step on the 1-d quadratic") {
  // L(w) = w^2 at w=1 with rho=0.5: first gradient 2, unit ascent to 1.5,
  // second gradient 3, descent with lr 0.1 lands at 0.7.
  Tensor w = Tensor::vector({1.0}, true);
  Sgd base({0.1, 0.0, 0.0});
  std::vector<Tensor> params{w};
  SamConfig config;
  config.rho = 0.5;
  const SamStepInfo info = sam_step(params, quadratic_loss(w), base, config);
  CHECK(w.values()[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(info.grad_norm == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(info.perturbation_norm == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_FALSE(info.perturbation_skipped);
}

TEST_CASE("rho = 0 reproduces the base step exactly") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> values(8);
    for (auto& v : values) v = rng.uniform(-2.0, 2.0);
    std::vector<double> coeffs(8);
    for (auto& v : coeffs) v = rng.uniform(-1.0, 1.0);

    Tensor w_sam = Tensor::vector(values, true);
    Tensor w_plain = Tensor::vector(values, true);
    const Tensor c = Tensor::vector(coeffs);

    // Nontrivial loss: ||tanh(w)*c||^2.
    const auto build = [&](Tensor& w) {
      return [&w, &c] { return ops::l2_squared(ops::multiply(ops::tanh(w), c)); };
    };

    Sgd base_sam({0.1, 0.9, 5e-4});
    Sgd base_plain({0.1, 0.9, 5e-4});
    std::vector<Tensor> params_sam{w_sam};
    std::vector<Tensor> params_plain{w_plain};

    SamConfig config;  // rho = 0
    for (int step = 0; step < 3; ++step) {
      const SamStepInfo info = sam_step(params_sam, build(w_sam), base_sam, config);
      CHECK(info.perturbation_skipped);
      const Gradients grads = grads_of(build(w_plain));
      base_plain.step(params_plain, grads);
    }
    CHECK(std::memcmp(w_sam.values().data(), w_plain.values().data(),
                      8 * sizeof(double)) == 0);
  }
}

TEST_CASE("zero first gradient skips the perturbation and applies a plain step") {
  Tensor w = Tensor::vector({0.0}, true);  // L(w) = w^2 has zero gradient here
  Sgd base({0.1, 0.0, 0.0});
  std::vector<Tensor> params{w};
  SamConfig config;
  config.rho = 0.5;
  const SamStepInfo info = sam_step(params, quadratic_loss(w), base, config);
  CHECK(info.perturbation_skipped);
  CHECK(info.grad_norm == 0.0);
  CHECK(w.values()[0] == 0.0);
}

TEST_CASE("perturbation norm equals rho across random losses") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> values(6);
    for (auto& v : values) v = rng.uniform(0.5, 2.0);
    Tensor w = Tensor::vector(values, true);
    Tensor u = Tensor::vector({rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0)}, true);
    Sgd base({0.05, 0.0, 0.0});
    std::vector<Tensor> params{w, u};
    SamConfig config;
    config.rho = 0.3;
    const SamStepInfo info = sam_step(
        params, [&] { return ops::add(ops::l2_squared(w), ops::l2_squared(u)); }, base, config);
    CHECK(std::abs(info.perturbation_norm - config.rho) < 1e-12);
  }
}

TEST_CASE("ascent property on convex quadratics: climbing never lowers the loss") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> values(5);
    for (auto& v : values) v = rng.uniform(-3.0, 3.0);
    std::vector<double> scale(5);
    for (auto& v : scale) v = rng.uniform(0.1, 2.0);
    const Tensor coeffs = Tensor::vector(scale);

    const auto loss_value = [&](const std::vector<double>& at) {
      double total = 0.0;
      for (std::size_t i = 0; i < at.size(); ++i) total += scale[i] * at[i] * at[i];
      return total;
    };

    Tensor w = Tensor::vector(values, true);
    std::vector<Tensor> params{w};
    const auto build = [&] {
      return ops::sum(ops::multiply(coeffs, ops::multiply(w, w)));
    };

    // Recompute the climbed point by hand from the first gradient.
    Gradients first = grads_of(build);
    const auto g = first.at(w);
    double norm = 0.0;
    for (double v : g) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) continue;
    std::vector<double> climbed = values;
    for (std::size_t i = 0; i < climbed.size(); ++i) climbed[i] += 0.3 * g[i] / norm;
    CHECK(loss_value(climbed) >= loss_value(values));
  }
}

TEST_CASE("parameters are restored exactly before the base update applies") {
  Tensor w = Tensor::vector({1.0, -2.0, 0.5}, true);
  const std::vector<double> before(w.values().begin(), w.values().end());

  // A base optimizer that records what parameter values it saw instead of
  // updating them.
  class Probe final : public Optimizer {
   public:
    std::vector<double> seen;
    void step(std::span<Tensor> params, const Gradients&) override {
      seen.assign(params[0].values().begin(), params[0].values().end());
    }
    double lr() const override { return 0.0; }
    void set_lr(double) override {}
    std::string name() const override { return "probe"; }
  };

  Probe probe;
  std::vector<Tensor> params{w};
  SamConfig config;
  config.rho = 0.7;
  sam_step(params, [&] { return ops::l2_squared(w); }, probe, config);
  REQUIRE(probe.seen.size() == before.size());
  CHECK(std::memcmp(probe.seen.data(), before.data(), before.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(w.values().data(), before.data(), before.size() * sizeof(double)) == 0);
}
