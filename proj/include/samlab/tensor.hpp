#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace samlab {

/// Row-major dense shape. An empty shape denotes a scalar (size 1).
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct TensorNode {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until backward touches this node
};
}  // namespace detail

/// Dense array of 64-bit reals with an optional gradient slot.
///
/// A Tensor is a cheap shared handle: copies alias the same storage, which is
/// what ties parameters on a Tape to the gradients backward() produces for
/// them. All entries are checked finite at construction; every primitive
/// re-checks its output.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }

  std::span<const double> values() const;
  /// Mutable access for in-place parameter updates. Mutating a tensor
  /// invalidates any live Tape that recorded it; update parameters only
  /// between tapes.
  std::span<double> values_mut();

  double item() const;  // requires size() == 1

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;

  /// Stable identity of the underlying storage; used as the key in gradient
  /// maps.
  const detail::TensorNode* id() const { return node_.get(); }

 private:
  std::shared_ptr<detail::TensorNode> node_;
  friend class Tape;
  friend struct OpRecorder;
};

/// Gradient map produced by one reverse sweep: parameter handle -> adjoint.
class Gradients {
 public:
  bool contains(const Tensor& t) const;
  std::span<const double> at(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<const detail::TensorNode*, std::vector<double>> grads_;
  friend class Tape;
};

/// Ordered record of executed primitives for reverse-mode differentiation.
///
/// While a Tape is alive it is the thread's active tape: every primitive in
/// ops:: appends an entry holding its operands, the produced value and a
/// closure computing the vector-Jacobian product. Entries are in execution
/// order, so operands always precede their consumers and one reverse sweep
/// visits each entry exactly once.
///
/// A Tape and its tensors belong to one thread; distinct tapes on distinct
/// threads are independent.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Reverse accumulation from a scalar output produced on this tape.
  /// Returns the gradient map over requires_grad tensors recorded on the
  /// tape and stores the same arrays in their grad slots; recorded tensors
  /// off the path to the output get zero gradients.
  Gradients backward(const Tensor& output);

  std::size_t entry_count() const { return entries_.size(); }

  static Tape* active();

 private:
  struct Entry {
    const char* op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> vjp;  // reads output adjoint, accumulates into inputs
  };

  void record(Entry entry);

  std::vector<Entry> entries_;
  std::unordered_set<const detail::TensorNode*> produced_;

  friend struct OpRecorder;
};

namespace ops {

/// Elementwise sum. Also accepts a rank-1 bias of length n against a rank-2
/// {m, n} left operand (row-vector bias addition) and a scalar bias against a
/// rank-1 left operand; no other broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);

/// {m, k} x {k, n} -> {m, n}; a rank-1 right operand {k} is treated as a
/// column, producing {m}.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);   // subgradient at 0 is 0
Tensor tanh(const Tensor& x);

/// Row-wise softmax cross-entropy with integer labels, fused with the
/// log-sum-exp shift. Logits {m, c} with labels in [0, c); a single-column
/// (or rank-1) input is the binary-logit form, scored against the implicit
/// class pair (0, s) with labels in {0, 1}. Returns per-row losses {m}.
Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels);

Tensor scalar_multiply(double c, const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor l2_squared(const Tensor& x);  // sum of squared entries

}  // namespace ops

}  // namespace samlab
