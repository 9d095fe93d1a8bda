#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "samlab/tensor.hpp"

namespace samlab {

/// Weight decay on both optimizers is the gradient of an explicit
/// lambda * ||w||^2 loss term: 2*lambda*w is added to the incoming gradient
/// before momentum (not decoupled decay).

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.0;      // in [0, 1)
  double weight_decay = 0.0;  // lambda, >= 0
  void validate() const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;   // in [0, 1)
  double beta2 = 0.999; // in [0, 1)
  double eps_hat = 1e-8;
  double weight_decay = 0.0;
  void validate() const;
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;

  /// Applies one update. Parameter identity and order must stay fixed across
  /// steps; state buffers are keyed by position.
  virtual void step(std::span<Tensor> params, const Gradients& grads) = 0;

  virtual double lr() const = 0;
  virtual void set_lr(double lr) = 0;
  virtual std::string name() const = 0;
};

/// v <- momentum * v + (g + 2*lambda*p); p <- p - lr * v
class Sgd final : public Optimizer {
 public:
  explicit Sgd(SgdConfig config);
  void step(std::span<Tensor> params, const Gradients& grads) override;
  double lr() const override { return config_.lr; }
  void set_lr(double lr) override { config_.lr = lr; }
  std::string name() const override { return "sgd"; }

 private:
  SgdConfig config_;
  std::vector<std::vector<double>> velocity_;
};

/// Bias-corrected Adam over g + 2*lambda*p.
class Adam final : public Optimizer {
 public:
  explicit Adam(AdamConfig config);
  void step(std::span<Tensor> params, const Gradients& grads) override;
  double lr() const override { return config_.lr; }
  void set_lr(double lr) override { config_.lr = lr; }
  std::string name() const override { return "adam"; }

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  long step_count_ = 0;
};

struct SamConfig {
  double rho = 0.0;               // weight perturbation radius, >= 0
  double grad_norm_floor = 1e-12; // below this the perturbation is skipped
  void validate() const;
};

struct SamStepInfo {
  double grad_norm = 0.0;          // ||g1|| over all parameters jointly
  double perturbation_norm = 0.0;  // ||eps_hat||; equals rho unless skipped
  bool perturbation_skipped = false;
};

/// Two-pass sharpness-aware update:
///   g1 = grad of the data loss at w; eps_hat = rho * g1 / ||g1||;
///   g2 = grad of the same loss at w + eps_hat; restore w exactly; apply the
///   base optimizer with g2.
/// build_loss must rebuild the data loss (no decay term) from the current
/// parameter values; it runs under a tape owned by this call. With rho = 0,
/// or when ||g1|| falls below the floor, the base step runs on g1 and the
/// result is identical to a plain base step on the same batch.
SamStepInfo sam_step(std::span<Tensor> params, const std::function<Tensor()>& build_loss,
                     Optimizer& base, const SamConfig& config);

}  // namespace samlab
