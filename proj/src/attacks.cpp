#include "samlab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace samlab {

namespace {

double sign_or_zero(double v) {
  if (v > 0.0) return 1.0;
  if (v < 0.0) return -1.0;
  return 0.0;
}

void clip_rows(std::vector<double>& values, const std::optional<std::pair<double, double>>& clip) {
  if (!clip) return;
  for (double& v : values) v = std::clamp(v, clip->first, clip->second);
}

std::vector<int> labels_for(const Model& model, const std::vector<int>& labels) {
  return labels_to_class_ids(labels, model.logit_columns());
}

}  // namespace

Norm norm_from_string(const std::string& name) {
  if (name == "linf") return Norm::kLinf;
  if (name == "l2") return Norm::kL2;
  throw std::invalid_argument("unknown norm '" + name + "' (expected linf or l2)");
}

std::string to_string(Norm norm) { return norm == Norm::kLinf ? "linf" : "l2"; }

void AttackBudget::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("attack budget: epsilon must be >= 0");
  }
  if (steps < 0) throw std::invalid_argument("attack budget: steps must be >= 0");
  // alpha only matters when iterates actually move.
  if (steps > 0 && epsilon > 0.0 && (!(alpha > 0.0) || !std::isfinite(alpha))) {
    throw std::invalid_argument("attack budget: alpha must be positive");
  }
  if (clip && !(clip->first < clip->second)) {
    throw std::invalid_argument("attack budget: clip lower bound must be below upper bound");
  }
}

std::string AttackBudget::label() const {
  std::ostringstream out;
  out << to_string(norm) << "_eps" << epsilon << "_steps" << steps;
  return out.str();
}

void project(Tensor& delta, Norm norm, double epsilon) {
  auto values = delta.values_mut();
  if (norm == Norm::kLinf) {
    for (double& v : values) v = std::clamp(v, -epsilon, epsilon);
    return;
  }
  const std::size_t rows = delta.rank() == 2 ? delta.shape()[0] : 1;
  const std::size_t cols = delta.size() / rows;
  for (std::size_t r = 0; r < rows; ++r) {
    double norm_sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = values[r * cols + c];
      norm_sq += v * v;
    }
    const double row_norm = std::sqrt(norm_sq);
    if (row_norm > epsilon) {
      const double scale = epsilon / row_norm;
      for (std::size_t c = 0; c < cols; ++c) values[r * cols + c] *= scale;
    }
  }
}

AttackResult pgd(const Model& model, const Tensor& x, const std::vector<int>& labels,
                 const AttackBudget& budget, Rng* rng,
                 const std::function<void(int step, const Tensor& x_iter)>& on_iterate) {
  budget.validate();
  if (x.rank() != 2) {
    throw std::invalid_argument("pgd: input batch must be rank 2, got shape " +
                                shape_to_string(x.shape()));
  }
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  if (labels.size() != rows) {
    throw std::invalid_argument("pgd: label count does not match the batch");
  }
  const std::vector<int> ids = labels_for(model, labels);

  const auto base = x.values();
  std::vector<double> current(base.begin(), base.end());

  const bool attack_active = budget.epsilon > 0.0 && budget.steps > 0;
  if (attack_active && budget.random_start) {
    if (rng == nullptr) {
      throw std::invalid_argument("pgd: random_start requires a generator");
    }
    if (budget.norm == Norm::kLinf) {
      for (double& v : current) v += rng->uniform(-budget.epsilon, budget.epsilon);
    } else {
      // Uniform direction scaled by a uniform fraction of the radius.
      for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> direction(cols);
        rng->fill_normal(direction, 0.0, 1.0);
        double norm_sq = 0.0;
        for (double v : direction) norm_sq += v * v;
        const double scale =
            budget.epsilon * rng->uniform() / std::max(std::sqrt(norm_sq), 1e-12);
        for (std::size_t c = 0; c < cols; ++c) current[r * cols + c] += scale * direction[c];
      }
    }
    Tensor delta0 = Tensor::matrix(rows, cols, std::move(current));
    {
      auto dv = delta0.values_mut();
      for (std::size_t i = 0; i < dv.size(); ++i) dv[i] -= base[i];
    }
    project(delta0, budget.norm, budget.epsilon);
    const auto dv = delta0.values();
    current.assign(base.begin(), base.end());
    for (std::size_t i = 0; i < current.size(); ++i) current[i] += dv[i];
    clip_rows(current, budget.clip);
  }

  if (attack_active) {
    for (int step = 0; step < budget.steps; ++step) {
      Tensor x_iter = Tensor::matrix(rows, cols, current, /*requires_grad=*/true);
      Gradients grads;
      {
        Tape tape;
        const Tensor batch_loss = loss(model, x_iter, labels);
        grads = tape.backward(batch_loss);
      }
      const auto gx = grads.at(x_iter);

      if (budget.norm == Norm::kLinf) {
        for (std::size_t i = 0; i < current.size(); ++i) {
          current[i] += budget.alpha * sign_or_zero(gx[i]);
        }
      } else {
        for (std::size_t r = 0; r < rows; ++r) {
          double norm_sq = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const double g = gx[r * cols + c];
            norm_sq += g * g;
          }
          const double inv = 1.0 / std::max(std::sqrt(norm_sq), 1e-12);
          for (std::size_t c = 0; c < cols; ++c) {
            current[r * cols + c] += budget.alpha * gx[r * cols + c] * inv;
          }
        }
      }

      std::vector<double> delta_values(current.size());
      for (std::size_t i = 0; i < current.size(); ++i) delta_values[i] = current[i] - base[i];
      Tensor delta = Tensor::matrix(rows, cols, std::move(delta_values));
      project(delta, budget.norm, budget.epsilon);
      const auto dv = delta.values();
      for (std::size_t i = 0; i < current.size(); ++i) current[i] = base[i] + dv[i];
      clip_rows(current, budget.clip);

      if (on_iterate) {
        on_iterate(step, Tensor::matrix(rows, cols, current));
      }
    }
  }

  AttackResult result;
  result.x_adv = Tensor::matrix(rows, cols, std::move(current));
  std::vector<double> delta_values(result.x_adv.size());
  const auto xadv = result.x_adv.values();
  for (std::size_t i = 0; i < delta_values.size(); ++i) delta_values[i] = xadv[i] - base[i];
  result.delta = Tensor::matrix(rows, cols, std::move(delta_values));

  const std::vector<int> predictions = predict_labels(model, result.x_adv);
  result.success_mask.resize(rows);
  const std::size_t head = model.logit_columns();
  for (std::size_t i = 0; i < rows; ++i) {
    const int truth = head == 1 ? labels[i] : ids[i];
    result.success_mask[i] = predictions[i] != truth;
  }
  return result;
}

AttackResult fgsm(const Model& model, const Tensor& x, const std::vector<int>& labels,
                  const AttackBudget& budget) {
  if (budget.norm != Norm::kLinf) {
    throw std::invalid_argument("fgsm: the sign attack is defined for the linf norm only");
  }
  // The single sign step fixes alpha and the step count; only the bound,
  // norm and clip box are taken from the caller's budget.
  AttackBudget single = budget;
  single.alpha = budget.epsilon;
  single.steps = 1;
  single.random_start = false;
  return pgd(model, x, labels, single);
}

double robust_accuracy(const Model& model, const Dataset& dataset, const AttackBudget& budget,
                       Rng* rng) {
  budget.validate();
  if (dataset.size() == 0) throw std::invalid_argument("robust_accuracy: dataset is empty");

  if (budget.epsilon == 0.0 || budget.steps == 0) {
    return accuracy(model, dataset.x, dataset.y);
  }

  // Attack in chunks to bound the tape footprint on large datasets.
  constexpr std::size_t kChunk = 4096;
  const std::size_t dim = dataset.dim();
  const auto xv = dataset.x.values();
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < dataset.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, dataset.size() - begin);
    std::vector<double> block(xv.begin() + begin * dim, xv.begin() + (begin + count) * dim);
    const Tensor x_block = Tensor::matrix(count, dim, std::move(block));
    const std::vector<int> y_block(dataset.y.begin() + begin, dataset.y.begin() + begin + count);
    const AttackResult attacked = pgd(model, x_block, y_block, budget, rng);
    for (bool flipped : attacked.success_mask) {
      if (!flipped) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

}  // namespace samlab
