#include "samlab/models.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "samlab/rng.hpp"

namespace samlab {

namespace {

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> uniform_init(std::size_t count, std::size_t fan_in, Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(count);
  for (auto& v : values) v = rng.uniform(-limit, limit);
  return values;
}

void check_input(const Model& model, const Tensor& x) {
  if (x.rank() != 2) {
    throw std::invalid_argument(model.kind() + ": input batch must be rank 2, got shape " +
                                shape_to_string(x.shape()));
  }
  if (x.shape()[1] != model.input_dim()) {
    std::ostringstream msg;
    msg << model.kind() << ": input has " << x.shape()[1] << " features but the model expects "
        << model.input_dim();
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation '" + name + "' (expected relu or tanh)");
}

std::string to_string(Activation activation) {
  return activation == Activation::kRelu ? "relu" : "tanh";
}

LinearModel::LinearModel(std::size_t dim, bool include_bias, std::uint64_t seed)
    : include_bias_(include_bias) {
  if (dim == 0) throw std::invalid_argument("linear: dimension must be positive");
  Rng rng(seed);
  w_ = Tensor::vector(uniform_init(dim, dim, rng), /*requires_grad=*/true);
  if (include_bias_) bias_ = Tensor::scalar(uniform_init(1, dim, rng)[0], /*requires_grad=*/true);
}

LinearModel LinearModel::from_weights(std::vector<double> w) {
  if (w.empty()) throw std::invalid_argument("linear: dimension must be positive");
  LinearModel model;
  model.w_ = Tensor::vector(std::move(w), /*requires_grad=*/true);
  model.include_bias_ = false;
  return model;
}

LinearModel LinearModel::from_weights(std::vector<double> w, double bias) {
  LinearModel model = from_weights(std::move(w));
  model.include_bias_ = true;
  model.bias_ = Tensor::scalar(bias, /*requires_grad=*/true);
  return model;
}

Tensor LinearModel::predict_logits(const Tensor& x) const {
  check_input(*this, x);
  Tensor score = ops::matmul(x, w_);
  if (include_bias_) score = ops::add(score, bias_);
  return score;
}

std::vector<Tensor> LinearModel::parameters() const {
  std::vector<Tensor> params{w_};
  if (include_bias_) params.push_back(bias_);
  return params;
}

std::size_t LinearModel::input_dim() const { return w_.size(); }

void LinearModel::save(std::ostream& out) const {
  out << "samlab checkpoint 1\n";
  out << "kind linear\n";
  out << "input_dim " << input_dim() << '\n';
  out << "include_bias " << (include_bias_ ? 1 : 0) << '\n';
  out << "tensor w " << w_.size() << '\n';
  const auto wv = w_.values();
  for (std::size_t i = 0; i < wv.size(); ++i) out << (i ? " " : "") << format_real(wv[i]);
  out << '\n';
  if (include_bias_) out << "tensor bias 1\n" << format_real(bias_.item()) << '\n';
  out << "end\n";
}

std::unique_ptr<Model> LinearModel::clone() const {
  auto copy = std::unique_ptr<LinearModel>(new LinearModel());
  copy->include_bias_ = include_bias_;
  copy->w_ = Tensor::vector({w_.values().begin(), w_.values().end()}, true);
  if (include_bias_) copy->bias_ = Tensor::scalar(bias_.item(), true);
  return copy;
}

MlpModel::MlpModel(std::vector<std::size_t> layer_sizes, Activation activation,
                   std::uint64_t seed)
    : layer_sizes_(std::move(layer_sizes)), activation_(activation) {
  if (layer_sizes_.size() < 2) {
    throw std::invalid_argument("mlp: need at least input and output layer sizes");
  }
  for (std::size_t s : layer_sizes_) {
    if (s == 0) throw std::invalid_argument("mlp: layer sizes must be positive");
  }
  Rng rng(seed);
  for (std::size_t layer = 0; layer + 1 < layer_sizes_.size(); ++layer) {
    const std::size_t fan_in = layer_sizes_[layer];
    const std::size_t fan_out = layer_sizes_[layer + 1];
    weights_.push_back(
        Tensor::matrix(fan_in, fan_out, uniform_init(fan_in * fan_out, fan_in, rng), true));
    biases_.push_back(Tensor::vector(uniform_init(fan_out, fan_in, rng), true));
  }
}

Tensor MlpModel::predict_logits(const Tensor& x) const {
  check_input(*this, x);
  Tensor h = x;
  for (std::size_t layer = 0; layer < weights_.size(); ++layer) {
    h = ops::add(ops::matmul(h, weights_[layer]), biases_[layer]);
    if (layer + 1 < weights_.size()) {
      h = activation_ == Activation::kRelu ? ops::relu(h) : ops::tanh(h);
    }
  }
  return h;
}

std::vector<Tensor> MlpModel::parameters() const {
  std::vector<Tensor> params;
  for (std::size_t layer = 0; layer < weights_.size(); ++layer) {
    params.push_back(weights_[layer]);
    params.push_back(biases_[layer]);
  }
  return params;
}

std::size_t MlpModel::input_dim() const { return layer_sizes_.front(); }

std::size_t MlpModel::logit_columns() const { return layer_sizes_.back(); }

void MlpModel::save(std::ostream& out) const {
  out << "samlab checkpoint 1\n";
  out << "kind mlp\n";
  out << "layer_sizes";
  for (std::size_t s : layer_sizes_) out << ' ' << s;
  out << '\n';
  out << "activation " << to_string(activation_) << '\n';
  for (std::size_t layer = 0; layer < weights_.size(); ++layer) {
    const auto wv = weights_[layer].values();
    out << "tensor layer" << layer << ".weight " << wv.size() << '\n';
    for (std::size_t i = 0; i < wv.size(); ++i) out << (i ? " " : "") << format_real(wv[i]);
    out << '\n';
    const auto bv = biases_[layer].values();
    out << "tensor layer" << layer << ".bias " << bv.size() << '\n';
    for (std::size_t i = 0; i < bv.size(); ++i) out << (i ? " " : "") << format_real(bv[i]);
    out << '\n';
  }
  out << "end\n";
}

std::unique_ptr<Model> MlpModel::clone() const {
  auto copy = std::unique_ptr<MlpModel>(new MlpModel());
  copy->layer_sizes_ = layer_sizes_;
  copy->activation_ = activation_;
  for (std::size_t layer = 0; layer < weights_.size(); ++layer) {
    const auto wv = weights_[layer].values();
    copy->weights_.push_back(Tensor(weights_[layer].shape(), {wv.begin(), wv.end()}, true));
    const auto bv = biases_[layer].values();
    copy->biases_.push_back(Tensor(biases_[layer].shape(), {bv.begin(), bv.end()}, true));
  }
  return copy;
}

std::vector<int> labels_to_class_ids(const std::vector<int>& labels, std::size_t logit_columns) {
  std::vector<int> ids(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int label = labels[i];
    if (logit_columns <= 2 && (label == -1 || label == 1)) {
      ids[i] = label == -1 ? 0 : 1;
      continue;
    }
    if (logit_columns == 1) {
      // A single-logit head scores ±1 labels only; 0/1 class ids would be
      // ambiguous against that convention.
      throw std::invalid_argument("labels: value " + std::to_string(label) + " at index " +
                                  std::to_string(i) + " invalid for a single-logit head; " +
                                  "expected -1 or +1");
    }
    if (label < 0 || static_cast<std::size_t>(label) >= logit_columns) {
      std::ostringstream msg;
      msg << "labels: value " << label << " at index " << i << " invalid for a "
          << logit_columns << "-class head";
      throw std::invalid_argument(msg.str());
    }
    ids[i] = label;
  }
  return ids;
}

Tensor loss(const Model& model, const Tensor& x, const std::vector<int>& labels,
            double weight_decay) {
  if (labels.empty()) throw std::invalid_argument("loss: batch must be nonempty");
  const std::vector<int> ids = labels_to_class_ids(labels, model.logit_columns());
  const Tensor logits = model.predict_logits(x);
  Tensor total = ops::mean(ops::cross_entropy_with_logits(logits, ids));
  if (weight_decay > 0.0) {
    for (const Tensor& param : model.parameters()) {
      total = ops::add(total, ops::scalar_multiply(weight_decay, ops::l2_squared(param)));
    }
  }
  return total;
}

std::vector<int> predict_labels(const Model& model, const Tensor& x) {
  const Tensor logits = model.predict_logits(x);
  const auto zv = logits.values();
  const std::size_t cols = model.logit_columns();
  const std::size_t rows = x.shape()[0];
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (cols == 1) {
      out[r] = zv[r] > 0.0 ? 1 : -1;
      continue;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (zv[r * cols + c] > zv[r * cols + best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const Model& model, const Tensor& x, const std::vector<int>& labels) {
  if (labels.empty()) throw std::invalid_argument("accuracy: need at least one sample");
  const std::vector<int> predictions = predict_labels(model, x);
  const std::size_t cols = model.logit_columns();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int truth = labels[i];
    if (cols == 2 && (truth == -1 || truth == 1)) truth = truth == -1 ? 0 : 1;
    if (cols == 1 && (truth != -1 && truth != 1)) {
      throw std::invalid_argument("accuracy: single-logit models score labels in {-1, +1}");
    }
    if (predictions[i] == truth) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

namespace {

std::vector<double> parse_value_line(std::istream& in, std::size_t count,
                                     const std::string& where) {
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!(in >> values[i])) {
      throw std::runtime_error(where + ": expected " + std::to_string(count) +
                               " parameter values");
    }
    if (!std::isfinite(values[i])) {
      throw std::runtime_error(where + ": non-finite parameter value");
    }
  }
  return values;
}

std::string next_token(std::istream& in, const std::string& where, const char* what) {
  std::string token;
  if (!(in >> token)) throw std::runtime_error(where + ": unexpected end of file before " + what);
  return token;
}

void expect_token(std::istream& in, const std::string& where, const std::string& expected) {
  const std::string token = next_token(in, where, expected.c_str());
  if (token != expected) {
    throw std::runtime_error(where + ": expected '" + expected + "', found '" + token + "'");
  }
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  model.save(out);
  if (!out) throw std::runtime_error("checkpoint: write to " + path + " failed");
}

std::unique_ptr<Model> load_checkpoint_stream(std::istream& in, const std::string& where) {
  expect_token(in, where, "samlab");
  expect_token(in, where, "checkpoint");
  expect_token(in, where, "1");
  expect_token(in, where, "kind");
  const std::string kind = next_token(in, where, "model kind");

  if (kind == "linear") {
    expect_token(in, where, "input_dim");
    std::size_t dim = 0;
    if (!(in >> dim) || dim == 0) throw std::runtime_error(where + ": bad input_dim");
    expect_token(in, where, "include_bias");
    int include_bias = 0;
    if (!(in >> include_bias)) throw std::runtime_error(where + ": bad include_bias flag");
    expect_token(in, where, "tensor");
    expect_token(in, where, "w");
    std::size_t count = 0;
    if (!(in >> count) || count != dim) throw std::runtime_error(where + ": bad weight count");
    std::vector<double> w = parse_value_line(in, count, where);
    double bias = 0.0;
    if (include_bias) {
      expect_token(in, where, "tensor");
      expect_token(in, where, "bias");
      expect_token(in, where, "1");
      bias = parse_value_line(in, 1, where)[0];
    }
    expect_token(in, where, "end");
    return std::make_unique<LinearModel>(
        include_bias ? LinearModel::from_weights(std::move(w), bias)
                     : LinearModel::from_weights(std::move(w)));
  }

  if (kind == "mlp") {
    expect_token(in, where, "layer_sizes");
    std::vector<std::size_t> sizes;
    // layer_sizes runs to end of line.
    std::string rest;
    std::getline(in, rest);
    std::istringstream sizes_in(rest);
    std::size_t s = 0;
    while (sizes_in >> s) sizes.push_back(s);
    if (sizes.size() < 2) throw std::runtime_error(where + ": bad layer_sizes");
    expect_token(in, where, "activation");
    const Activation activation = activation_from_string(next_token(in, where, "activation"));
    MlpModel model(sizes, activation, /*seed=*/0);
    for (std::size_t layer = 0; layer + 1 < sizes.size(); ++layer) {
      for (const char* part : {"weight", "bias"}) {
        expect_token(in, where, "tensor");
        const std::string name = next_token(in, where, "tensor name");
        const std::string expected =
            "layer" + std::to_string(layer) + "." + part;
        if (name != expected) {
          throw std::runtime_error(where + ": expected tensor '" + expected + "', found '" +
                                   name + "'");
        }
        std::size_t count = 0;
        if (!(in >> count)) throw std::runtime_error(where + ": bad tensor size for " + name);
        Tensor target = std::string(part) == "weight" ? model.parameters()[layer * 2]
                                                      : model.parameters()[layer * 2 + 1];
        if (count != target.size()) {
          throw std::runtime_error(where + ": tensor " + name + " holds " +
                                   std::to_string(count) + " values, expected " +
                                   std::to_string(target.size()));
        }
        const std::vector<double> values = parse_value_line(in, count, where);
        auto dst = target.values_mut();
        for (std::size_t i = 0; i < count; ++i) dst[i] = values[i];
      }
    }
    expect_token(in, where, "end");
    return model.clone();
  }

  throw std::runtime_error(where + ": unknown model kind '" + kind + "'");
}

std::unique_ptr<Model> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  return load_checkpoint_stream(in, path);
}

}  // namespace samlab
