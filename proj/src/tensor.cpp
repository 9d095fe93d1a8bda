#include "samlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace samlab {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ')';
  return out.str();
}

namespace {

thread_local std::vector<Tape*> g_tape_stack;

void check_finite_values(const char* where, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream msg;
      msg << where << ": non-finite value " << values[i] << " at flat index " << i;
      throw std::runtime_error(msg.str());
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor: shape entries must be positive");
  }
  if (shape_size(shape) != values.size()) {
    std::ostringstream msg;
    msg << "tensor: shape " << shape_to_string(shape) << " holds " << shape_size(shape)
        << " entries but " << values.size() << " values were given";
    throw std::invalid_argument(msg.str());
  }
  check_finite_values("tensor", values);
  node_ = std::make_shared<detail::TensorNode>();
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> values(shape_size(shape), 0.0);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_size(shape), value);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("tensor: use of empty handle");
  return node_->shape;
}

std::size_t Tensor::size() const { return shape_size(shape()); }

std::span<const double> Tensor::values() const {
  if (!node_) throw std::logic_error("tensor: use of empty handle");
  return node_->values;
}

std::span<double> Tensor::values_mut() {
  if (!node_) throw std::logic_error("tensor: use of empty handle");
  return node_->values;
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("tensor: item() requires a scalar, got shape " +
                                shape_to_string(shape()));
  }
  return node_->values[0];
}

bool Tensor::requires_grad() const {
  if (!node_) throw std::logic_error("tensor: use of empty handle");
  return node_->requires_grad;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor: no gradient present");
  return node_->grad;
}

bool Gradients::contains(const Tensor& t) const { return grads_.count(t.id()) != 0; }

std::span<const double> Gradients::at(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) throw std::out_of_range("gradients: tensor was not recorded on the tape");
  return it->second;
}

Tape::Tape() { g_tape_stack.push_back(this); }

Tape::~Tape() {
  if (!g_tape_stack.empty() && g_tape_stack.back() == this) g_tape_stack.pop_back();
}

Tape* Tape::active() { return g_tape_stack.empty() ? nullptr : g_tape_stack.back(); }

void Tape::record(Entry entry) {
  produced_.insert(entry.output.id());
  entries_.push_back(std::move(entry));
}

Gradients Tape::backward(const Tensor& output) {
  if (!output.valid() || output.size() != 1) {
    throw std::invalid_argument("backward: output must be a scalar tensor");
  }
  if (produced_.count(output.id()) == 0) {
    throw std::invalid_argument("backward: output was not produced on this tape");
  }

  // Zero adjoints for everything the tape touched, then seed the output.
  for (auto& entry : entries_) {
    for (auto& input : entry.inputs) input.node_->grad.assign(input.size(), 0.0);
    entry.output.node_->grad.assign(entry.output.size(), 0.0);
  }
  output.node_->grad[0] = 1.0;

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->vjp();

  Gradients result;
  for (auto& entry : entries_) {
    for (auto& input : entry.inputs) {
      if (input.requires_grad()) result.grads_.emplace(input.id(), input.node_->grad);
    }
    if (entry.output.requires_grad()) {
      result.grads_.emplace(entry.output.id(), entry.output.node_->grad);
    }
  }
  // Intermediates keep no gradient slot once the sweep is done.
  for (auto& entry : entries_) {
    for (auto& input : entry.inputs) {
      if (!input.requires_grad()) input.node_->grad.clear();
    }
    if (!entry.output.requires_grad()) entry.output.node_->grad.clear();
  }
  return result;
}

// Shared machinery for the primitive implementations. make_vjp is only
// invoked when a tape is active, so inference-mode evaluation records
// nothing and builds no closures.
struct OpRecorder {
  template <typename VjpFactory>
  static Tensor emit(const char* op, std::vector<Tensor> inputs, Shape out_shape,
                     std::vector<double> out_values, VjpFactory&& make_vjp) {
    check_finite_values(op, out_values);
    Tensor out(std::move(out_shape), std::move(out_values), false);
    if (Tape* tape = Tape::active()) {
      std::function<void()> vjp = make_vjp(out);
      tape->record(Tape::Entry{op, std::move(inputs), out, std::move(vjp)});
    }
    return out;
  }

  static std::vector<double>& adjoint(const Tensor& t) { return t.node_->grad; }
};

namespace ops {

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": operand shapes " +
                              shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()) +
                              " do not conform");
}

double stable_softplus(double s) {
  // log(1 + e^s) without overflow.
  return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s)));
}

double stable_sigmoid(double s) {
  if (s >= 0.0) {
    const double e = std::exp(-s);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(s);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto av = a.values();
  const auto bv = b.values();
  if (a.shape() == b.shape()) {
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return OpRecorder::emit("add", {a, b}, a.shape(), std::move(out), [&](const Tensor& o) {
      return [a, b, o] {
        const auto& go = OpRecorder::adjoint(o);
        auto& ga = OpRecorder::adjoint(a);
        auto& gb = OpRecorder::adjoint(b);
        for (std::size_t i = 0; i < go.size(); ++i) {
          ga[i] += go[i];
          gb[i] += go[i];
        }
      };
    });
  }
  // Row-vector bias addition: {m, n} + {n}, and its rank-1 counterpart
  // {m} + scalar.
  if (a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0]) {
    const std::size_t rows = a.shape()[0], cols = a.shape()[1];
    std::vector<double> out(av.size());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = av[r * cols + c] + bv[c];
    return OpRecorder::emit("add", {a, b}, a.shape(), std::move(out), [&](const Tensor& o) {
      return [a, b, o, rows, cols] {
        const auto& go = OpRecorder::adjoint(o);
        auto& ga = OpRecorder::adjoint(a);
        auto& gb = OpRecorder::adjoint(b);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            ga[r * cols + c] += go[r * cols + c];
            gb[c] += go[r * cols + c];
          }
        }
      };
    });
  }
  if (a.rank() == 1 && b.rank() == 0) {
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[0];
    return OpRecorder::emit("add", {a, b}, a.shape(), std::move(out), [&](const Tensor& o) {
      return [a, b, o] {
        const auto& go = OpRecorder::adjoint(o);
        auto& ga = OpRecorder::adjoint(a);
        auto& gb = OpRecorder::adjoint(b);
        for (std::size_t i = 0; i < go.size(); ++i) {
          ga[i] += go[i];
          gb[0] += go[i];
        }
      };
    });
  }
  shape_mismatch("add", a, b);
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch("subtract", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return OpRecorder::emit("subtract", {a, b}, a.shape(), std::move(out), [&](const Tensor& o) {
    return [a, b, o] {
      const auto& go = OpRecorder::adjoint(o);
      auto& ga = OpRecorder::adjoint(a);
      auto& gb = OpRecorder::adjoint(b);
      for (std::size_t i = 0; i < go.size(); ++i) {
        ga[i] += go[i];
        gb[i] -= go[i];
      }
    };
  });
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch("multiply", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return OpRecorder::emit("multiply", {a, b}, a.shape(), std::move(out), [&](const Tensor& o) {
    return [a, b, o] {
      const auto& go = OpRecorder::adjoint(o);
      auto& ga = OpRecorder::adjoint(a);
      auto& gb = OpRecorder::adjoint(b);
      const auto av = a.values();
      const auto bv = b.values();
      for (std::size_t i = 0; i < go.size(); ++i) {
        ga[i] += go[i] * bv[i];
        gb[i] += go[i] * av[i];
      }
    };
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 1)) shape_mismatch("matmul", a, b);
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const auto av = a.values();
  const auto bv = b.values();

  if (b.rank() == 1) {
    if (b.shape()[0] != k) shape_mismatch("matmul", a, b);
    std::vector<double> out(m, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += av[r * k + j] * bv[j];
      out[r] = acc;
    }
    return OpRecorder::emit("matmul", {a, b}, Shape{m}, std::move(out), [&](const Tensor& o) {
      return [a, b, o, m, k] {
        const auto& go = OpRecorder::adjoint(o);
        auto& ga = OpRecorder::adjoint(a);
        auto& gb = OpRecorder::adjoint(b);
        const auto av = a.values();
        const auto bv = b.values();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < k; ++j) {
            ga[r * k + j] += go[r] * bv[j];
            gb[j] += av[r * k + j] * go[r];
          }
        }
      };
    });
  }

  if (b.shape()[0] != k) shape_mismatch("matmul", a, b);
  const std::size_t n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const double arj = av[r * k + j];
      for (std::size_t c = 0; c < n; ++c) out[r * n + c] += arj * bv[j * n + c];
    }
  }
  return OpRecorder::emit("matmul", {a, b}, Shape{m, n}, std::move(out), [&](const Tensor& o) {
    return [a, b, o, m, k, n] {
      const auto& go = OpRecorder::adjoint(o);
      auto& ga = OpRecorder::adjoint(a);
      auto& gb = OpRecorder::adjoint(b);
      const auto av = a.values();
      const auto bv = b.values();
      // dA += G B^T, dB += A^T G
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < k; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < n; ++c) acc += go[r * n + c] * bv[j * n + c];
          ga[r * k + j] += acc;
        }
      }
      for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t c = 0; c < n; ++c) {
          double acc = 0.0;
          for (std::size_t r = 0; r < m; ++r) acc += av[r * k + j] * go[r * n + c];
          gb[j * n + c] += acc;
        }
      }
    };
  });
}

Tensor relu(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return OpRecorder::emit("relu", {x}, x.shape(), std::move(out), [&](const Tensor& o) {
    return [x, o] {
      const auto& go = OpRecorder::adjoint(o);
      auto& gx = OpRecorder::adjoint(x);
      const auto xv = x.values();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (xv[i] > 0.0) gx[i] += go[i];
      }
    };
  });
}

Tensor tanh(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  return OpRecorder::emit("tanh", {x}, x.shape(), std::move(out), [&](const Tensor& o) {
    return [x, o] {
      const auto& go = OpRecorder::adjoint(o);
      auto& gx = OpRecorder::adjoint(x);
      const auto yv = o.values();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * (1.0 - yv[i] * yv[i]);
    };
  });
}

Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t rows = logits.rank() == 2 ? logits.shape()[0] : logits.size();
  const std::size_t cols = logits.rank() == 2 ? logits.shape()[1] : 1;
  if (logits.rank() > 2) {
    throw std::invalid_argument("cross_entropy_with_logits: logits must be rank 1 or 2, got " +
                                shape_to_string(logits.shape()));
  }
  if (labels.size() != rows) {
    std::ostringstream msg;
    msg << "cross_entropy_with_logits: " << rows << " logit rows but " << labels.size()
        << " labels";
    throw std::invalid_argument(msg.str());
  }
  const auto zv = logits.values();
  std::vector<double> out(rows);
  // Saved per-row class probabilities for the reverse pass; for the binary
  // single-logit form this is sigmoid(s).
  std::vector<double> probs(rows * cols);

  for (std::size_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= std::max<std::size_t>(cols, 2)) {
      std::ostringstream msg;
      msg << "cross_entropy_with_logits: label " << label << " outside [0, "
          << std::max<std::size_t>(cols, 2) << ") at row " << r;
      throw std::invalid_argument(msg.str());
    }
    if (cols == 1) {
      const double s = zv[r];
      out[r] = stable_softplus(s) - static_cast<double>(label) * s;
      probs[r] = stable_sigmoid(s);
      continue;
    }
    double zmax = zv[r * cols];
    for (std::size_t c = 1; c < cols; ++c) zmax = std::max(zmax, zv[r * cols + c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < cols; ++c) denom += std::exp(zv[r * cols + c] - zmax);
    const double lse = zmax + std::log(denom);
    out[r] = lse - zv[r * cols + static_cast<std::size_t>(label)];
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] = std::exp(zv[r * cols + c] - lse);
  }

  return OpRecorder::emit(
      "cross_entropy_with_logits", {logits}, Shape{rows}, std::move(out), [&](const Tensor& o) {
        return [logits, o, labels, probs = std::move(probs), rows, cols] {
          const auto& go = OpRecorder::adjoint(o);
          auto& gz = OpRecorder::adjoint(logits);
          for (std::size_t r = 0; r < rows; ++r) {
            if (cols == 1) {
              gz[r] += go[r] * (probs[r] - static_cast<double>(labels[r]));
              continue;
            }
            for (std::size_t c = 0; c < cols; ++c) {
              const double indicator = (static_cast<std::size_t>(labels[r]) == c) ? 1.0 : 0.0;
              gz[r * cols + c] += go[r] * (probs[r * cols + c] - indicator);
            }
          }
        };
      });
}

Tensor scalar_multiply(double c, const Tensor& x) {
  if (!std::isfinite(c)) throw std::invalid_argument("scalar_multiply: non-finite scalar");
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * xv[i];
  return OpRecorder::emit("scalar_multiply", {x}, x.shape(), std::move(out),
                          [&](const Tensor& o) {
                            return [x, o, c] {
                              const auto& go = OpRecorder::adjoint(o);
                              auto& gx = OpRecorder::adjoint(x);
                              for (std::size_t i = 0; i < go.size(); ++i) gx[i] += c * go[i];
                            };
                          });
}

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  double acc = 0.0;
  for (double v : xv) acc += v;
  return OpRecorder::emit("sum", {x}, Shape{}, {acc}, [&](const Tensor& o) {
    return [x, o] {
      const double go = OpRecorder::adjoint(o)[0];
      auto& gx = OpRecorder::adjoint(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go;
    };
  });
}

Tensor mean(const Tensor& x) {
  const auto xv = x.values();
  double acc = 0.0;
  for (double v : xv) acc += v;
  const double inv_n = 1.0 / static_cast<double>(xv.size());
  return OpRecorder::emit("mean", {x}, Shape{}, {acc * inv_n}, [&](const Tensor& o) {
    return [x, o, inv_n] {
      const double go = OpRecorder::adjoint(o)[0];
      auto& gx = OpRecorder::adjoint(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go * inv_n;
    };
  });
}

Tensor l2_squared(const Tensor& x) {
  const auto xv = x.values();
  double acc = 0.0;
  for (double v : xv) acc += v * v;
  return OpRecorder::emit("l2_squared", {x}, Shape{}, {acc}, [&](const Tensor& o) {
    return [x, o] {
      const double go = OpRecorder::adjoint(o)[0];
      auto& gx = OpRecorder::adjoint(x);
      const auto xv = x.values();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * go * xv[i];
    };
  });
}

}  // namespace ops

}  // namespace samlab
