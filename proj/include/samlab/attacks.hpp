#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "samlab/data.hpp"
#include "samlab/models.hpp"
#include "samlab/rng.hpp"
#include "samlab/tensor.hpp"

namespace samlab {

enum class Norm { kLinf, kL2 };

Norm norm_from_string(const std::string& name);
std::string to_string(Norm norm);

struct AttackBudget {
  Norm norm = Norm::kLinf;
  double epsilon = 0.0;  // perturbation bound, >= 0
  double alpha = 0.0;    // gradient-ascent step size, > 0 when steps > 0
  int steps = 0;
  bool random_start = false;
  std::optional<std::pair<double, double>> clip;  // (lo, hi) box for inputs

  void validate() const;
  std::string label() const;  // compact tag used in result columns
};

struct AttackResult {
  Tensor x_adv;
  Tensor delta;                    // x_adv - x
  std::vector<bool> success_mask;  // sample is misclassified after the attack
};

/// Projects each row of delta onto the epsilon-ball: elementwise clamp for
/// l-inf, per-sample rescale for l2. Rows already inside the ball are
/// returned unchanged.
void project(Tensor& delta, Norm norm, double epsilon);

/// Iterated ascent x <- Pi(x + alpha * dir(grad_x loss)), with dir = sign
/// for l-inf and the per-sample normalized gradient for l2; the clip box is
/// re-applied after every iterate. With epsilon = 0 or steps = 0 the input
/// is returned unchanged. random_start draws the initial point uniformly in
/// the ball and requires an rng. on_iterate, when set, observes every
/// iterate (after projection and clipping).
AttackResult pgd(const Model& model, const Tensor& x, const std::vector<int>& labels,
                 const AttackBudget& budget, Rng* rng = nullptr,
                 const std::function<void(int step, const Tensor& x_iter)>& on_iterate = {});

/// Single-step sign attack: x_adv = clip(x + epsilon * sign(grad_x loss)).
/// Exactly 1-step l-inf pgd with alpha = epsilon and no random start; the
/// budget must carry norm = linf.
AttackResult fgsm(const Model& model, const Tensor& x, const std::vector<int>& labels,
                  const AttackBudget& budget);

/// Fraction of dataset samples still classified correctly after the attack;
/// with a zero budget this is exactly the clean accuracy.
double robust_accuracy(const Model& model, const Dataset& dataset, const AttackBudget& budget,
                       Rng* rng = nullptr);

}  // namespace samlab
