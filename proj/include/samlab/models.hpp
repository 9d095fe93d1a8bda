#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "samlab/tensor.hpp"

namespace samlab {

enum class Activation { kRelu, kTanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation activation);

/// Differentiable classifier. predict_logits runs through the tensor
/// primitives, so it is recorded on the active tape and differentiable with
/// respect to both the parameters and the input batch.
///
/// Label conventions: a model whose head emits a single logit column scores
/// binary labels in {-1, +1} (mapped internally as -1 -> 0, +1 -> 1); a
/// multi-column head takes class ids in [0, classes), or ±1 labels when it
/// has exactly two columns.
class Model {
 public:
  virtual ~Model() = default;

  virtual Tensor predict_logits(const Tensor& x) const = 0;
  virtual std::vector<Tensor> parameters() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t logit_columns() const = 0;
  virtual std::string kind() const = 0;
  virtual void save(std::ostream& out) const = 0;
  virtual std::unique_ptr<Model> clone() const = 0;
};

/// Bias-free (by default) linear scorer sign(w . x); the hypothesis class of
/// the feature-model analysis.
class LinearModel final : public Model {
 public:
  LinearModel(std::size_t dim, bool include_bias, std::uint64_t seed);
  static LinearModel from_weights(std::vector<double> w);
  static LinearModel from_weights(std::vector<double> w, double bias);

  Tensor predict_logits(const Tensor& x) const override;
  std::vector<Tensor> parameters() const override;
  std::size_t input_dim() const override;
  std::size_t logit_columns() const override { return 1; }
  std::string kind() const override { return "linear"; }
  void save(std::ostream& out) const override;
  std::unique_ptr<Model> clone() const override;

  const Tensor& weights() const { return w_; }
  bool include_bias() const { return include_bias_; }

 private:
  LinearModel() = default;
  Tensor w_;     // {d}
  Tensor bias_;  // scalar, only when include_bias_
  bool include_bias_ = false;
};

/// Fully connected network with relu or tanh hidden activations.
/// layer_sizes runs input -> hidden... -> classes; initialization is uniform
/// in ±1/sqrt(fan_in), seeded.
class MlpModel final : public Model {
 public:
  MlpModel(std::vector<std::size_t> layer_sizes, Activation activation, std::uint64_t seed);

  Tensor predict_logits(const Tensor& x) const override;
  std::vector<Tensor> parameters() const override;
  std::size_t input_dim() const override;
  std::size_t logit_columns() const override;
  std::string kind() const override { return "mlp"; }
  void save(std::ostream& out) const override;
  std::unique_ptr<Model> clone() const override;

  const std::vector<std::size_t>& layer_sizes() const { return layer_sizes_; }
  Activation activation() const { return activation_; }

 private:
  MlpModel() = default;
  std::vector<std::size_t> layer_sizes_;
  Activation activation_ = Activation::kRelu;
  std::vector<Tensor> weights_;  // per layer {in, out}
  std::vector<Tensor> biases_;   // per layer {out}
};

/// Mean cross-entropy of the model on a batch, plus weight_decay * ||w||^2
/// over all parameters when weight_decay > 0. Labels follow the conventions
/// in Model.
Tensor loss(const Model& model, const Tensor& x, const std::vector<int>& labels,
            double weight_decay = 0.0);

/// Predicted labels in the same domain the model scores: ±1 for a
/// single-logit head, class ids otherwise (score 0 predicts -1; argmax ties
/// take the lowest class).
std::vector<int> predict_labels(const Model& model, const Tensor& x);

/// Fraction of labels predicted correctly. ±1 labels are accepted for
/// two-column heads.
double accuracy(const Model& model, const Tensor& x, const std::vector<int>& labels);

/// Maps labels to class ids for a head with the given number of logit
/// columns, validating the domain.
std::vector<int> labels_to_class_ids(const std::vector<int>& labels, std::size_t logit_columns);

/// Plain-text checkpoints: topology header plus one flat 17-significant-
/// digit value list per parameter; round-trips are value-exact.
void save_checkpoint(const Model& model, const std::string& path);
std::unique_ptr<Model> load_checkpoint(const std::string& path);
std::unique_ptr<Model> load_checkpoint_stream(std::istream& in, const std::string& where);

}  // namespace samlab
