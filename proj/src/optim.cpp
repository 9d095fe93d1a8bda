#include "samlab/optim.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace samlab {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::span<const double> checked_grad(const char* who, std::span<Tensor> params,
                                     const Gradients& grads, std::size_t index) {
  const Tensor& param = params[index];
  if (!grads.contains(param)) {
    std::ostringstream msg;
    msg << who << ": no gradient for parameter " << index << " (shape "
        << shape_to_string(param.shape()) << ")";
    throw std::invalid_argument(msg.str());
  }
  const auto g = grads.at(param);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      std::ostringstream msg;
      msg << who << ": non-finite gradient for parameter " << index << " at flat index " << i;
      throw std::runtime_error(msg.str());
    }
  }
  return g;
}

void ensure_state(std::vector<std::vector<double>>& state, std::span<Tensor> params) {
  if (state.empty()) {
    state.reserve(params.size());
    for (const Tensor& p : params) state.emplace_back(p.size(), 0.0);
    return;
  }
  if (state.size() != params.size()) {
    throw std::invalid_argument("optimizer: parameter count changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state[i].size() != params[i].size()) {
      throw std::invalid_argument("optimizer: parameter shape changed between steps");
    }
  }
}

}  // namespace

void SgdConfig::validate() const {
  require(lr > 0.0 && std::isfinite(lr), "sgd: lr must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "sgd: momentum must lie in [0, 1)");
  require(weight_decay >= 0.0 && std::isfinite(weight_decay),
          "sgd: weight_decay must be >= 0");
}

void AdamConfig::validate() const {
  require(lr > 0.0 && std::isfinite(lr), "adam: lr must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0, "adam: beta1 must lie in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "adam: beta2 must lie in [0, 1)");
  require(eps_hat > 0.0, "adam: eps_hat must be positive");
  require(weight_decay >= 0.0 && std::isfinite(weight_decay),
          "adam: weight_decay must be >= 0");
}

void SamConfig::validate() const {
  require(rho >= 0.0 && std::isfinite(rho), "sam: rho must be >= 0");
  require(grad_norm_floor > 0.0, "sam: grad_norm_floor must be positive");
}

Sgd::Sgd(SgdConfig config) : config_(config) { config_.validate(); }

void Sgd::step(std::span<Tensor> params, const Gradients& grads) {
  ensure_state(velocity_, params);
  for (std::size_t index = 0; index < params.size(); ++index) {
    const auto g = checked_grad("sgd_step", params, grads, index);
    auto p = params[index].values_mut();
    auto& v = velocity_[index];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g_total = g[i] + 2.0 * config_.weight_decay * p[i];
      v[i] = config_.momentum * v[i] + g_total;
      p[i] -= config_.lr * v[i];
    }
  }
}

Adam::Adam(AdamConfig config) : config_(config) { config_.validate(); }

void Adam::step(std::span<Tensor> params, const Gradients& grads) {
  ensure_state(first_moment_, params);
  ensure_state(second_moment_, params);
  ++step_count_;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (std::size_t index = 0; index < params.size(); ++index) {
    const auto g = checked_grad("adam_step", params, grads, index);
    auto p = params[index].values_mut();
    auto& m = first_moment_[index];
    auto& v = second_moment_[index];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g_total = g[i] + 2.0 * config_.weight_decay * p[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g_total;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g_total * g_total;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps_hat);
    }
  }
}

SamStepInfo sam_step(std::span<Tensor> params, const std::function<Tensor()>& build_loss,
                     Optimizer& base, const SamConfig& config) {
  config.validate();
  if (params.empty()) throw std::invalid_argument("sam_step: no parameters");

  Gradients first_grads;
  {
    Tape tape;
    const Tensor loss = build_loss();
    first_grads = tape.backward(loss);
  }

  SamStepInfo info;
  double norm_sq = 0.0;
  for (std::size_t index = 0; index < params.size(); ++index) {
    const auto g = checked_grad("sam_step", params, first_grads, index);
    for (double v : g) norm_sq += v * v;
  }
  info.grad_norm = std::sqrt(norm_sq);

  if (config.rho == 0.0 || info.grad_norm < config.grad_norm_floor) {
    info.perturbation_skipped = true;
    base.step(params, first_grads);
    return info;
  }

  // Climb to w + rho * g1/||g1||, keeping exact copies for the restore.
  std::vector<std::vector<double>> saved;
  saved.reserve(params.size());
  const double scale = config.rho / info.grad_norm;
  double perturbation_sq = 0.0;
  for (std::size_t index = 0; index < params.size(); ++index) {
    auto p = params[index].values_mut();
    saved.emplace_back(p.begin(), p.end());
    const auto g = first_grads.at(params[index]);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double delta = scale * g[i];
      perturbation_sq += delta * delta;
      p[i] += delta;
    }
  }
  info.perturbation_norm = std::sqrt(perturbation_sq);

  Gradients second_grads;
  {
    Tape tape;
    const Tensor perturbed_loss = build_loss();
    second_grads = tape.backward(perturbed_loss);
  }

  for (std::size_t index = 0; index < params.size(); ++index) {
    auto p = params[index].values_mut();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = saved[index][i];
  }

  base.step(params, second_grads);
  return info;
}

}  // namespace samlab
