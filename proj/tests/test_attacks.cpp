#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "samlab/attacks.hpp"
#include "samlab/theory.hpp"

using namespace samlab;

namespace {

AttackBudget linf_budget(double eps, double alpha, int steps) {
  AttackBudget budget;
  budget.norm = Norm::kLinf;
  budget.epsilon = eps;
  budget.alpha = alpha;
  budget.steps = steps;
  return budget;
}

double worst_case_linear_loss(const std::vector<double>& w, const std::vector<double>& x,
                              const std::vector<int>& y, double eps) {
  // For the logistic loss of score w.x the adversary moves each coordinate
  // by -eps * y * sign(w_j), lowering the signed score by eps * sum|w|.
  const std::size_t dim = w.size();
  const std::size_t batch = y.size();
  double sum_abs = 0.0;
  for (double v : w) sum_abs += std::abs(v);
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    double score = 0.0;
    for (std::size_t j = 0; j < dim; ++j) score += w[j] * x[i * dim + j];
    const double worst = score - eps * y[i] * sum_abs;
    total += std::log1p(std::exp(-y[i] * worst));
  }
  return total / static_cast<double>(batch);
}

}  // namespace

TEST_CASE("projection clamps, rescales and leaves interior points untouched") {
  const double eps = 0.25;
  Tensor delta = Tensor::matrix(1, 2, {2.0 * eps, -eps / 2.0});
  project(delta, Norm::kLinf, eps);
  CHECK(delta.values()[0] == eps);
  CHECK(delta.values()[1] == -eps / 2.0);

  Tensor l2_delta = Tensor::matrix(1, 2, {0.3, 0.4});  // norm 0.5 = 2*eps
  project(l2_delta, Norm::kL2, 0.25);
  const double norm = std::hypot(l2_delta.values()[0], l2_delta.values()[1]);
  CHECK(norm == doctest::Approx(0.25).epsilon(1e-12));

  Tensor inside = Tensor::matrix(2, 2, {0.1, -0.1, 0.05, 0.0});
  const std::vector<double> before(inside.values().begin(), inside.values().end());
  project(inside, Norm::kLinf, 0.25);
  CHECK(std::memcmp(inside.values().data(), before.data(), 4 * sizeof(double)) == 0);
  Tensor inside_l2 = Tensor::matrix(1, 2, {0.1, -0.1});
  project(inside_l2, Norm::kL2, 0.25);
  CHECK(inside_l2.values()[0] == 0.1);
  CHECK(inside_l2.values()[1] == -0.1);
}

TEST_CASE("fgsm with zero budget returns the input exactly") {
  const LinearModel model = LinearModel::from_weights({1.0, -2.0});
  const Tensor x = Tensor::matrix(2, 2, {0.5, 0.25, -1.0, 2.0});
  const AttackResult result = fgsm(model, x, {1, -1}, linf_budget(0.0, 0.0, 1));
  CHECK(std::memcmp(result.x_adv.values().data(), x.values().data(), 4 * sizeof(double)) == 0);
  for (double d : result.delta.values()) CHECK(d == 0.0);
}

TEST_CASE("fgsm moves against the weight signs for a positive sample") {
  // Logistic-loss input gradient is -c y w with c > 0, so the sign step is
  // -y * sign(w) per coordinate.
  const LinearModel model = LinearModel::from_weights({3.0, -1.0});
  const Tensor x = Tensor::matrix(1, 2, {0.2, 0.7});
  const double eps = 0.05;
  const AttackResult result = fgsm(model, x, {1}, linf_budget(eps, 0.0, 1));
  CHECK(result.x_adv.values()[0] == doctest::Approx(0.2 - eps).epsilon(1e-15));
  CHECK(result.x_adv.values()[1] == doctest::Approx(0.7 + eps).epsilon(1e-15));
}

TEST_CASE("fgsm rejects non-linf budgets") {
  const LinearModel model = LinearModel::from_weights({1.0});
  const Tensor x = Tensor::matrix(1, 1, {1.0});
  AttackBudget budget = linf_budget(0.1, 0.1, 1);
  budget.norm = Norm::kL2;
  CHECK_THROWS_AS(fgsm(model, x, {1}, budget), std::invalid_argument);
}

TEST_CASE("zero gradient leaves the input unperturbed under the sign convention") {
  const LinearModel model = LinearModel::from_weights({1.0, 0.0});
  // Second coordinate has zero weight, hence zero input gradient.
  const Tensor x = Tensor::matrix(1, 2, {0.1, 0.9});
  const AttackResult result = fgsm(model, x, {1}, linf_budget(0.05, 0.0, 1));
  CHECK(result.x_adv.values()[1] == 0.9);
  CHECK(result.x_adv.values()[0] == doctest::Approx(0.05 + 0.1 - 0.1).epsilon(1.0));
  CHECK(result.delta.values()[1] == 0.0);
}

TEST_CASE("fgsm equals one-step linf pgd with alpha = eps exactly") {
  const LinearModel model = LinearModel::from_weights({1.5, -0.5, 2.0});
  const Tensor x = Tensor::matrix(2, 3, {0.1, 0.2, 0.3, -0.4, 0.5, -0.6});
  const std::vector<int> y{1, -1};
  const double eps = 0.03;
  const AttackResult a = fgsm(model, x, y, linf_budget(eps, 0.0, 1));
  const AttackResult b = pgd(model, x, y, linf_budget(eps, eps, 1));
  CHECK(std::memcmp(a.x_adv.values().data(), b.x_adv.values().data(), 6 * sizeof(double)) == 0);
}

TEST_CASE("pgd with zero budget or zero steps returns the input exactly") {
  const LinearModel model = LinearModel::from_weights({1.0, 1.0});
  const Tensor x = Tensor::matrix(1, 2, {0.4, -0.4});
  const AttackResult zero_eps = pgd(model, x, {1}, linf_budget(0.0, 0.1, 25));
  CHECK(std::memcmp(zero_eps.x_adv.values().data(), x.values().data(), 2 * sizeof(double)) == 0);
  const AttackResult zero_steps = pgd(model, x, {1}, linf_budget(0.5, 0.1, 0));
  CHECK(std::memcmp(zero_steps.x_adv.values().data(), x.values().data(),
                    2 * sizeof(double)) == 0);
}

TEST_CASE("one huge step lands exactly on the ball boundary after projection") {
  const LinearModel model = LinearModel::from_weights({2.0, -1.0});
  const Tensor x = Tensor::matrix(1, 2, {0.0, 0.0});
  const double eps = 0.125;
  AttackBudget budget = linf_budget(eps, 100.0, 1);
  const AttackResult result = pgd(model, x, {1}, budget);
  for (double d : result.delta.values()) CHECK(std::abs(d) == eps);

  budget.norm = Norm::kL2;
  const AttackResult l2 = pgd(model, x, {1}, budget);
  CHECK(std::hypot(l2.delta.values()[0], l2.delta.values()[1]) ==
        doctest::Approx(eps).epsilon(1e-12));
}

TEST_CASE("every pgd iterate stays inside the ball") {
  const LinearModel model = LinearModel::from_weights({1.0, -2.0, 0.5});
  Rng rng(4);
  std::vector<double> xv(5 * 3);
  for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
  const Tensor x = Tensor::matrix(5, 3, xv);
  const std::vector<int> y{1, -1, 1, 1, -1};

  for (Norm norm : {Norm::kLinf, Norm::kL2}) {
    AttackBudget budget = linf_budget(0.2, 0.09, 12);
    budget.norm = norm;
    budget.random_start = true;
    Rng start_rng(9);
    double worst = 0.0;
    const auto observer = [&](int, const Tensor& x_iter) {
      const auto iv = x_iter.values();
      for (std::size_t r = 0; r < 5; ++r) {
        if (norm == Norm::kLinf) {
          for (std::size_t c = 0; c < 3; ++c) {
            worst = std::max(worst, std::abs(iv[r * 3 + c] - xv[r * 3 + c]));
          }
        } else {
          double norm_sq = 0.0;
          for (std::size_t c = 0; c < 3; ++c) {
            const double d = iv[r * 3 + c] - xv[r * 3 + c];
            norm_sq += d * d;
          }
          worst = std::max(worst, std::sqrt(norm_sq));
        }
      }
    };
    pgd(model, x, y, budget, &start_rng, observer);
    CHECK(worst <= budget.epsilon + 1e-9);
  }
}

TEST_CASE("pgd attains the closed-form worst case on a linear model") {
  Rng rng(13);
  std::vector<double> w(6);
  for (auto& v : w) v = rng.uniform(-1.5, 1.5);
  std::vector<double> xv(8 * 6);
  for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
  std::vector<int> y(8);
  for (auto& label : y) label = rng.bernoulli(0.5) ? 1 : -1;

  const LinearModel model = LinearModel::from_weights(w);
  const Tensor x = Tensor::matrix(8, 6, xv);
  const double eps = 0.1;
  const AttackBudget budget = linf_budget(eps, eps / 4.0, 10);
  const AttackResult result = pgd(model, x, y, budget);

  const double achieved = loss(model, result.x_adv, y).item();
  const double bound = worst_case_linear_loss(w, xv, y, eps);
  CHECK(achieved == doctest::Approx(bound).epsilon(1e-9));
  CHECK(achieved <= bound + 1e-9);

  // And the multi-step attack is at least as strong as the single step.
  const AttackResult single = fgsm(model, x, y, linf_budget(eps, 0.0, 1));
  CHECK(achieved >= loss(model, single.x_adv, y).item() - 1e-12);
}

TEST_CASE("pgd loss is at least the fgsm loss per sample on a linear model") {
  Rng rng(14);
  std::vector<double> w(4);
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  const LinearModel model = LinearModel::from_weights(w);
  std::vector<double> xv(16 * 4);
  for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
  std::vector<int> y(16);
  for (auto& label : y) label = rng.bernoulli(0.5) ? 1 : -1;
  const Tensor x = Tensor::matrix(16, 4, xv);
  const double eps = 0.2;

  const AttackResult strong = pgd(model, x, y, linf_budget(eps, eps / 4.0, 10));
  const AttackResult weak = fgsm(model, x, y, linf_budget(eps, 0.0, 1));
  const Tensor strong_losses =
      ops::cross_entropy_with_logits(model.predict_logits(strong.x_adv),
                                     labels_to_class_ids(y, 1));
  const Tensor weak_losses = ops::cross_entropy_with_logits(
      model.predict_logits(weak.x_adv), labels_to_class_ids(y, 1));
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(strong_losses.values()[i] >= weak_losses.values()[i] - 1e-12);
  }
}

TEST_CASE("clip keeps adversarial points inside the box") {
  const LinearModel model = LinearModel::from_weights({5.0, -5.0});
  AttackBudget budget = linf_budget(0.5, 0.5, 3);
  budget.clip = std::make_pair(0.0, 1.0);
  const Tensor x = Tensor::matrix(1, 2, {0.9, 0.1});
  const AttackResult result = pgd(model, x, {1}, budget);
  for (double v : result.x_adv.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("robust accuracy with zero budget equals clean accuracy exactly") {
  const FeatureModelSpec spec{0.9, 0.1, 10};
  Dataset data = sample_feature_model(spec, 2000, 5);
  std::vector<double> w{wr_standard(spec).w1};
  w.insert(w.end(), spec.n, 1.0);
  const LinearModel model = LinearModel::from_weights(w);

  const double clean = accuracy(model, data.x, data.y);
  CHECK(robust_accuracy(model, data, linf_budget(0.0, 0.1, 10)) == clean);
  CHECK(robust_accuracy(model, data, linf_budget(0.2, 0.1, 0)) == clean);
  Dataset empty = data;
  empty.y.clear();
  CHECK_THROWS_AS(robust_accuracy(model, empty, linf_budget(0.0, 0.1, 10)),
                  std::invalid_argument);
}

TEST_CASE("constant-output model keeps clean accuracy under any budget") {
  const LinearModel model = LinearModel::from_weights({0.0, 0.0});
  const std::vector<std::array<double, 2>> centers{{-1.0, 0.0}, {1.0, 0.0}};
  Dataset data = sample_mixture2d(centers, 0.5, 400, 8);
  // Map the two class ids onto the ±1 domain the single-logit head scores.
  for (int& label : data.y) label = label == 0 ? -1 : 1;
  data.domain = LabelDomain::kPlusMinusOne;
  const double clean = accuracy(model, data.x, data.y);
  CHECK(robust_accuracy(model, data, linf_budget(0.3, 0.075, 10)) == clean);
}

TEST_CASE("robust accuracy is non-increasing in the budget on a linear model") {
  const FeatureModelSpec spec{0.9, 0.1, 10};
  Dataset data = sample_feature_model(spec, 4000, 6);
  std::vector<double> w{wr_standard(spec).w1};
  w.insert(w.end(), spec.n, 1.0);
  const LinearModel model = LinearModel::from_weights(w);
  double previous = 1.1;
  for (double eps : {0.0, 0.02, 0.05, 0.1, 0.2}) {
    const double value = robust_accuracy(model, data, linf_budget(eps, eps / 4.0, 10));
    CHECK(value <= previous + 1e-12);
    previous = value;
  }
}

TEST_CASE("pgd on the Gaussian block matches the analytic attacked accuracy") {
  // The analysis perturbs only the Gaussian coordinates (the sign coordinate
  // cannot be flipped). Equal weights on that block with w1 = 0 makes the
  // attacked accuracy Phi((eta - eps) * sqrt(n)); the attack sees exactly
  // that sub-problem.
  const FeatureModelSpec spec{0.9, 0.1, 10};
  const double eps = 0.05;
  const std::size_t count = 100000;
  Dataset data = sample_feature_model(spec, count, 12);

  Dataset gaussian_block;
  const auto x = data.x.values();
  std::vector<double> block(count * spec.n);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < spec.n; ++j) block[i * spec.n + j] = x[i * (spec.n + 1) + 1 + j];
  }
  gaussian_block.x = Tensor::matrix(count, spec.n, std::move(block));
  gaussian_block.y = data.y;
  gaussian_block.domain = LabelDomain::kPlusMinusOne;

  const LinearModel equal_weights = LinearModel::from_weights(std::vector<double>(spec.n, 1.0));
  const double empirical =
      robust_accuracy(equal_weights, gaussian_block, linf_budget(eps, eps / 4.0, 10));
  const double analytic = adv_accuracy(0.0, spec, eps);
  const double sigma = std::sqrt(analytic * (1.0 - analytic) / static_cast<double>(count));
  CHECK(std::abs(empirical - analytic) < 3.0 * sigma);

  // Full-model variant: attack the Gaussian block of each sample, keep the
  // robust coordinate fixed, and score with w = (w1, 1, ..., 1).
  const double w1 = wr_standard(spec).w1;
  const AttackResult attacked =
      pgd(equal_weights, gaussian_block.x, gaussian_block.y, linf_budget(eps, eps / 4.0, 10));
  const auto adv = attacked.x_adv.values();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < count; ++i) {
    double score = w1 * x[i * (spec.n + 1)];
    for (std::size_t j = 0; j < spec.n; ++j) score += adv[i * spec.n + j];
    if ((score > 0.0 ? 1 : -1) == data.y[i]) ++correct;
  }
  const double full_empirical = static_cast<double>(correct) / static_cast<double>(count);
  const double full_analytic = adv_accuracy(w1, spec, eps);
  const double full_sigma =
      std::sqrt(full_analytic * (1.0 - full_analytic) / static_cast<double>(count));
  CHECK(std::abs(full_empirical - full_analytic) < 3.0 * full_sigma);
}

TEST_CASE("attacks are bitwise reproducible without random start") {
  const LinearModel model = LinearModel::from_weights({0.7, -1.3, 0.2});
  Rng rng(15);
  std::vector<double> xv(6 * 3);
  for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
  const Tensor x = Tensor::matrix(6, 3, xv);
  const std::vector<int> y{1, -1, 1, -1, 1, -1};
  const AttackBudget budget = linf_budget(0.15, 0.05, 7);
  const AttackResult a = pgd(model, x, y, budget);
  const AttackResult b = pgd(model, x, y, budget);
  CHECK(std::memcmp(a.x_adv.values().data(), b.x_adv.values().data(),
                    18 * sizeof(double)) == 0);
}

TEST_CASE("random start requires a generator and stays inside the ball") {
  const LinearModel model = LinearModel::from_weights({1.0, 1.0});
  const Tensor x = Tensor::matrix(1, 2, {0.0, 0.0});
  AttackBudget budget = linf_budget(0.1, 0.05, 2);
  budget.random_start = true;
  CHECK_THROWS_AS(pgd(model, x, {1}, budget), std::invalid_argument);
  Rng rng(3);
  const AttackResult result = pgd(model, x, {1}, budget, &rng);
  for (double d : result.delta.values()) CHECK(std::abs(d) <= budget.epsilon + 1e-9);
}

TEST_CASE("success mask marks misclassified adversarial samples") {
  const LinearModel model = LinearModel::from_weights({1.0});
  // Sample at 0.05 with label +1: an eps=0.2 attack crosses the boundary;
  // a sample at 5.0 stays correct.
  const Tensor x = Tensor::matrix(2, 1, {0.05, 5.0});
  const AttackResult result = pgd(model, x, {1, 1}, linf_budget(0.2, 0.05, 10));
  CHECK(result.success_mask[0]);
  CHECK_FALSE(result.success_mask[1]);
}
