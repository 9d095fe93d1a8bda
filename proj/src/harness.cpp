#include "samlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "samlab/rng.hpp"
#include "samlab/svg_plot.hpp"

namespace fs = std::filesystem;

namespace samlab {

std::string format_real17(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

TaskKind task_from_string(const std::string& name) {
  if (name == "theory") return TaskKind::kTheory;
  if (name == "train") return TaskKind::kTrain;
  if (name == "attack") return TaskKind::kAttack;
  if (name == "sweep") return TaskKind::kSweep;
  if (name == "plot") return TaskKind::kPlot;
  throw ConfigError("unknown task '" + name + "' (expected theory, train, attack, sweep or plot)");
}

std::string to_string(TaskKind task) {
  switch (task) {
    case TaskKind::kTheory: return "theory";
    case TaskKind::kTrain: return "train";
    case TaskKind::kAttack: return "attack";
    case TaskKind::kSweep: return "sweep";
    case TaskKind::kPlot: return "plot";
  }
  return "?";
}

std::size_t SweepGrid::point_count() const {
  std::size_t count = 1;
  for (const auto& [key, values] : axes) count *= values.size();
  return count;
}

std::map<std::string, std::string> SweepGrid::point(std::size_t index) const {
  std::map<std::string, std::string> assignment;
  for (const auto& [key, values] : axes) {
    assignment[key] = values[index % values.size()];
    index /= values.size();
  }
  return assignment;
}

namespace {

// ---------------------------------------------------------------------------
// Config loading

class ErrorSink {
 public:
  template <typename Fn>
  void attempt(Fn&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      errors_.emplace_back(e.what());
    }
  }

  void add(const std::string& message) { errors_.push_back(message); }

  void raise_if_any() const {
    if (errors_.empty()) return;
    std::ostringstream out;
    out << "configuration invalid (" << errors_.size() << " problem"
        << (errors_.size() == 1 ? "" : "s") << "):";
    for (const auto& e : errors_) out << "\n  - " << e;
    throw ConfigError(out.str());
  }

 private:
  std::vector<std::string> errors_;
};

std::vector<std::array<double, 2>> parse_centers(const std::string& text) {
  std::vector<std::array<double, 2>> centers;
  for (const std::string& chunk : split(text, ';')) {
    const std::string pair_text = trim(chunk);
    if (pair_text.empty()) continue;
    const auto coords = split(pair_text, ',');
    if (coords.size() != 2) {
      throw ConfigError("data.centers: expected 'x,y' pairs separated by ';', found '" +
                        pair_text + "'");
    }
    centers.push_back({std::stod(trim(coords[0])), std::stod(trim(coords[1]))});
  }
  if (centers.size() < 2) throw ConfigError("data.centers: need at least 2 centers");
  return centers;
}

AttackBudget parse_budget(KeyValueConfig& config, const std::string& prefix, ErrorSink& errors) {
  AttackBudget budget;
  errors.attempt([&] { budget.norm = norm_from_string(config.get_string(prefix + "norm", "linf")); });
  budget.epsilon = config.get_double(prefix + "eps", 0.0);
  budget.alpha = config.get_double(prefix + "alpha", budget.epsilon / 4.0);
  budget.steps = static_cast<int>(config.get_int(prefix + "steps", 10));
  budget.random_start = config.get_bool(prefix + "random_start", false);
  const std::string clip = config.get_string(prefix + "clip", "none");
  if (clip != "none") {
    const auto bounds = split(clip, ',');
    if (bounds.size() != 2) {
      errors.add(prefix + "clip: expected 'lo,hi' or 'none', found '" + clip + "'");
    } else {
      errors.attempt([&] {
        budget.clip = std::make_pair(std::stod(trim(bounds[0])), std::stod(trim(bounds[1])));
      });
    }
  }
  errors.attempt([&] { budget.validate(); });
  return budget;
}

std::vector<std::size_t> to_sizes(const std::vector<std::int64_t>& values, const char* what) {
  std::vector<std::size_t> sizes;
  for (std::int64_t v : values) {
    if (v <= 0) throw ConfigError(std::string(what) + ": entries must be positive");
    sizes.push_back(static_cast<std::size_t>(v));
  }
  return sizes;
}

}  // namespace

RunConfig RunConfig::load(KeyValueConfig config) {
  RunConfig run;
  ErrorSink errors;

  errors.attempt([&] { run.task = task_from_string(config.get_string("task", "train")); });
  run.seed = config.get_u64("seed", 0);
  run.out_dir = config.get_string("out", "out");
  run.parallel = static_cast<int>(config.get_int("parallel", 1));
  if (run.parallel < 1) errors.add("parallel: must be >= 1");

  // data.*
  run.data.kind = config.get_string("data.kind", "feature_model");
  if (run.data.kind != "feature_model" && run.data.kind != "mixture2d" &&
      run.data.kind != "delimited") {
    errors.add("data.kind: expected feature_model, mixture2d or delimited, found '" +
               run.data.kind + "'");
  }
  run.data.spec.p = config.get_double("data.p", run.data.spec.p);
  run.data.spec.eta = config.get_double("data.eta", run.data.spec.eta);
  {
    const std::int64_t n = config.get_int("data.n", static_cast<std::int64_t>(run.data.spec.n));
    if (n <= 0) {
      errors.add("data.n: must be positive");
    } else {
      run.data.spec.n = static_cast<std::size_t>(n);
    }
  }
  if (run.data.kind == "feature_model") {
    errors.attempt([&] { run.data.spec.validate(); });
  }
  {
    const std::int64_t samples = config.get_int("data.samples", 1000);
    if (samples <= 0) {
      errors.add("data.samples: must be positive");
    } else {
      run.data.samples = static_cast<std::size_t>(samples);
    }
    const std::int64_t test_samples = config.get_int("data.test_samples", 0);
    if (test_samples < 0) {
      errors.add("data.test_samples: must be >= 0");
    } else {
      run.data.test_samples = static_cast<std::size_t>(test_samples);
    }
  }
  if (config.has("data.centers")) {
    errors.attempt([&] { run.data.centers = parse_centers(config.require_string("data.centers")); });
  }
  run.data.spread = config.get_double("data.spread", 0.5);
  if (run.data.kind == "mixture2d" && !(run.data.spread > 0.0)) {
    errors.add("data.spread: must be positive");
  }
  run.data.path = config.get_string("data.path", "");
  run.data.test_path = config.get_string("data.test_path", "");
  {
    const std::int64_t dim = config.get_int("data.dim", 0);
    if (dim < 0) {
      errors.add("data.dim: must be positive");
    } else {
      run.data.dim = static_cast<std::size_t>(dim);
    }
  }
  {
    const std::string domain = config.get_string("data.label_domain", "pm1");
    if (domain == "pm1") {
      run.data.domain = LabelDomain::kPlusMinusOne;
    } else if (domain == "classes") {
      run.data.domain = LabelDomain::kClassIds;
    } else {
      errors.add("data.label_domain: expected pm1 or classes, found '" + domain + "'");
    }
    run.data.num_classes = static_cast<int>(config.get_int("data.num_classes", 2));
    if (run.data.num_classes < 2) errors.add("data.num_classes: must be >= 2");
  }
  if (run.data.kind == "delimited") {
    if (run.data.path.empty()) errors.add("data.path: required for delimited data");
    if (run.data.dim == 0) errors.add("data.dim: required for delimited data");
  }

  // model.*
  run.model.kind = config.get_string("model.kind", "linear");
  if (run.model.kind != "linear" && run.model.kind != "mlp") {
    errors.add("model.kind: expected linear or mlp, found '" + run.model.kind + "'");
  }
  run.model.include_bias = config.get_bool("model.include_bias", false);
  errors.attempt([&] {
    run.model.hidden = to_sizes(config.get_int_list("model.hidden", {16, 16}), "model.hidden");
  });
  errors.attempt([&] {
    run.model.activation =
        activation_from_string(config.get_string("model.activation", "relu"));
  });

  // optim.*
  run.optim.kind = config.get_string("optim.kind", "sgd");
  if (run.optim.kind != "sgd" && run.optim.kind != "adam") {
    errors.add("optim.kind: expected sgd or adam, found '" + run.optim.kind + "'");
  }
  {
    const std::string mode = config.get_string("optim.mode", "plain");
    if (mode == "plain") {
      run.optim.mode = TrainMode::kPlain;
    } else if (mode == "sam") {
      run.optim.mode = TrainMode::kSam;
    } else if (mode == "adv") {
      run.optim.mode = TrainMode::kAdversarial;
    } else {
      errors.add("optim.mode: expected plain, sam or adv, found '" + mode + "'");
    }
  }
  const double lr = config.get_double("optim.lr", run.optim.kind == "adam" ? 1e-3 : 0.1);
  const double weight_decay = config.get_double("optim.weight_decay", 0.0);
  run.optim.sgd.lr = lr;
  run.optim.sgd.momentum = config.get_double("optim.momentum", 0.9);
  run.optim.sgd.weight_decay = weight_decay;
  run.optim.adam.lr = lr;
  run.optim.adam.beta1 = config.get_double("optim.beta1", 0.9);
  run.optim.adam.beta2 = config.get_double("optim.beta2", 0.999);
  run.optim.adam.eps_hat = config.get_double("optim.eps_hat", 1e-8);
  run.optim.adam.weight_decay = weight_decay;
  run.optim.sam.rho = config.get_double("optim.rho", 0.0);
  run.optim.sam.grad_norm_floor = config.get_double("optim.grad_norm_floor", 1e-12);
  if (run.optim.kind == "sgd") {
    errors.attempt([&] { run.optim.sgd.validate(); });
  } else {
    errors.attempt([&] { run.optim.adam.validate(); });
  }
  errors.attempt([&] { run.optim.sam.validate(); });
  run.optim.attack = parse_budget(config, "optim.attack.", errors);
  if (run.optim.mode == TrainMode::kAdversarial &&
      (run.optim.attack.epsilon <= 0.0 || run.optim.attack.steps <= 0)) {
    errors.add("optim.attack: adversarial training needs eps > 0 and steps > 0");
  }

  // train.*
  {
    const std::int64_t epochs = config.get_int("train.epochs", 30);
    const std::int64_t batch = config.get_int("train.batch_size", 128);
    if (epochs <= 0) {
      errors.add("train.epochs: must be positive");
    } else {
      run.train.epochs = static_cast<std::size_t>(epochs);
    }
    if (batch <= 0) {
      errors.add("train.batch_size: must be >= 1");
    } else {
      run.train.batch_size = static_cast<std::size_t>(batch);
    }
  }
  errors.attempt([&] {
    run.train.milestones =
        to_sizes(config.get_int_list("train.milestones", {20, 26}), "train.milestones");
  });
  run.train.decay = config.get_double("train.decay", 0.1);
  if (!(run.train.decay > 0.0)) errors.add("train.decay: must be positive");
  for (std::size_t i = 0; i < run.train.milestones.size(); ++i) {
    if (run.train.milestones[i] >= run.train.epochs) {
      errors.add("train.milestones: entries must be < train.epochs");
      break;
    }
    if (i > 0 && run.train.milestones[i] <= run.train.milestones[i - 1]) {
      errors.add("train.milestones: entries must be strictly increasing");
      break;
    }
  }

  // eval.<k>.*
  {
    std::vector<int> indices;
    for (const std::string& key : config.keys_with_prefix("eval.")) {
      const auto parts = split(key, '.');
      if (parts.size() >= 2) {
        try {
          const int index = std::stoi(parts[1]);
          if (indices.empty() || indices.back() != index) indices.push_back(index);
        } catch (const std::exception&) {
          errors.add("eval budgets: expected keys like eval.1.eps, found '" + key + "'");
        }
      }
    }
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    for (int index : indices) {
      run.eval_budgets.push_back(
          parse_budget(config, "eval." + std::to_string(index) + ".", errors));
    }
  }

  // theory.*
  run.theory.p = config.get_double_list("theory.p", run.theory.p);
  run.theory.eta = config.get_double_list("theory.eta", run.theory.eta);
  run.theory.n = config.get_int_list("theory.n", run.theory.n);
  run.theory.eps = config.get_double_list("theory.eps", run.theory.eps);
  if (run.task == TaskKind::kTheory) {
    for (double eps : run.theory.eps) {
      if (eps < 0.0) errors.add("theory.eps: entries must be >= 0");
    }
    for (std::int64_t n : run.theory.n) {
      if (n < 1) errors.add("theory.n: entries must be >= 1");
    }
  }

  // sweep.grid.*
  for (const std::string& key : config.keys_with_prefix("sweep.grid.")) {
    const std::string path = key.substr(std::string("sweep.grid.").size());
    const std::string values_text = config.require_string(key);
    std::vector<std::string> values;
    for (const std::string& chunk : split(values_text, '|')) {
      const std::string value = trim(chunk);
      if (!value.empty()) values.push_back(value);
    }
    if (path.empty() || values.empty()) {
      errors.add("sweep.grid: '" + key + "' needs a config path and a non-empty value list");
      continue;
    }
    run.sweep.axes[path] = values;
  }
  if (run.task == TaskKind::kSweep && run.sweep.axes.empty()) {
    errors.add("sweep.grid: a sweep needs at least one sweep.grid.<config path> axis");
  }

  // plot.*
  run.plot.input = config.get_string("plot.input", "");
  run.plot.x = config.get_string("plot.x", "");
  {
    const std::string ys = config.get_string("plot.y", "");
    for (const std::string& chunk : split(ys, ',')) {
      const std::string name = trim(chunk);
      if (!name.empty()) run.plot.y.push_back(name);
    }
  }
  run.plot.kind = config.get_string("plot.kind", "line");
  if (run.plot.kind != "line" && run.plot.kind != "scatter") {
    errors.add("plot.kind: expected line or scatter, found '" + run.plot.kind + "'");
  }
  run.plot.output = config.get_string("plot.output", "");
  run.plot.title = config.get_string("plot.title", "");
  if (run.task == TaskKind::kPlot) {
    if (run.plot.input.empty()) errors.add("plot.input: required for the plot task");
    if (run.plot.x.empty()) errors.add("plot.x: required for the plot task");
    if (run.plot.y.empty()) errors.add("plot.y: required for the plot task");
  }

  run.attack_checkpoint = config.get_string("attack.checkpoint", "");
  if (run.task == TaskKind::kAttack && run.attack_checkpoint.empty()) {
    errors.add("attack.checkpoint: required for the attack task");
  }

  for (const std::string& key : config.unconsumed()) {
    errors.add("unknown key '" + key + "'");
  }
  errors.raise_if_any();

  run.echo = config.canonical_text();
  return run;
}

// ---------------------------------------------------------------------------
// Builders

namespace {

Dataset build_dataset(const RunConfig& config, bool test_set) {
  const DataConfig& data = config.data;
  const std::uint64_t stream = test_set ? RngStreams::kTestData : RngStreams::kTrainData;
  const std::uint64_t seed = Rng::derive_seed(config.seed, stream);
  const std::size_t count = test_set && data.test_samples > 0 ? data.test_samples : data.samples;

  if (data.kind == "feature_model") return sample_feature_model(data.spec, count, seed);
  if (data.kind == "mixture2d") {
    return sample_mixture2d(data.centers, data.spread, count, seed);
  }
  DelimitedSchema schema{data.dim, data.domain, data.num_classes};
  const std::string& path = test_set && !data.test_path.empty() ? data.test_path : data.path;
  return load_delimited(path, schema);
}

/// Converts dataset labels into the domain the model head scores.
std::vector<int> labels_for_model(const Model& model, const Dataset& dataset) {
  if (model.logit_columns() == 1) {
    std::vector<int> labels(dataset.y.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int y = dataset.y[i];
      if (y == -1 || y == 1) {
        labels[i] = y;
      } else if (y == 0 && dataset.num_classes == 2) {
        labels[i] = -1;
      } else if (y == 1 && dataset.num_classes == 2) {
        labels[i] = 1;
      } else {
        throw std::invalid_argument(
            "a single-logit model needs binary data; found label " + std::to_string(y));
      }
    }
    return labels;
  }
  return dataset.y;
}

std::unique_ptr<Model> build_model(const RunConfig& config, const Dataset& dataset) {
  const std::uint64_t init_seed = Rng::derive_seed(config.seed, RngStreams::kModelInit);
  if (config.model.kind == "linear") {
    return std::make_unique<LinearModel>(dataset.dim(), config.model.include_bias, init_seed);
  }
  std::vector<std::size_t> sizes;
  sizes.push_back(dataset.dim());
  for (std::size_t h : config.model.hidden) sizes.push_back(h);
  sizes.push_back(static_cast<std::size_t>(std::max(dataset.num_classes, 2)));
  return std::make_unique<MlpModel>(sizes, config.model.activation, init_seed);
}

std::unique_ptr<Optimizer> build_optimizer(const RunConfig& config) {
  if (config.optim.kind == "adam") return std::make_unique<Adam>(config.optim.adam);
  return std::make_unique<Sgd>(config.optim.sgd);
}

// ---------------------------------------------------------------------------
// Result writers

using nlohmann::json;

json record_to_json(const RunRecord& record) {
  json j;
  j["task"] = record.task;
  j["seed"] = record.seed;
  j["epoch_losses"] = record.epoch_losses;
  j["final_train_loss"] = record.final_train_loss;
  j["clean_accuracy"] = record.clean_accuracy;
  json robust = json::object();
  for (const auto& [label, value] : record.robust_accuracy) robust[label] = value;
  j["robust_accuracy"] = robust;
  if (record.wr_estimated) j["wr_estimated"] = *record.wr_estimated;
  j["wall_seconds"] = record.wall_seconds;
  j["status"] = record.status;
  j["checkpoint"] = record.checkpoint_path;
  j["config"] = record.config_echo;
  return j;
}

void write_record_json(const RunRecord& record, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << record_to_json(record).dump(2) << '\n';
}

std::vector<std::string> record_csv_header(const RunRecord& record) {
  std::vector<std::string> header = {"task",       "seed",          "final_train_loss",
                                     "clean_accuracy"};
  for (const auto& [label, value] : record.robust_accuracy) header.push_back("robust_" + label);
  header.push_back("wr_estimated");
  header.push_back("status");
  return header;
}

std::vector<std::string> record_csv_row(const RunRecord& record) {
  std::vector<std::string> row = {record.task, std::to_string(record.seed),
                                  format_real17(record.final_train_loss),
                                  format_real17(record.clean_accuracy)};
  for (const auto& [label, value] : record.robust_accuracy) row.push_back(format_real17(value));
  row.push_back(record.wr_estimated ? format_real17(*record.wr_estimated) : "");
  row.push_back(record.status);
  return row;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "# samlab results v1\n";
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
  if (!out) throw std::runtime_error("write to " + path + " failed");
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& order, std::size_t begin,
                   std::size_t end) {
  const std::size_t dim = x.shape()[1];
  const auto values = x.values();
  std::vector<double> batch((end - begin) * dim);
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t row = order[i];
    for (std::size_t j = 0; j < dim; ++j) batch[(i - begin) * dim + j] = values[row * dim + j];
  }
  return Tensor::matrix(end - begin, dim, std::move(batch));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tasks

RunRecord run_train(const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(config.out_dir);

  const Dataset train_set = build_dataset(config, /*test_set=*/false);
  const bool separate_test = config.data.test_samples > 0 || !config.data.test_path.empty();
  const Dataset test_set = separate_test ? build_dataset(config, /*test_set=*/true) : train_set;

  std::unique_ptr<Model> model = build_model(config, train_set);
  const std::vector<int> train_labels = labels_for_model(*model, train_set);
  const std::vector<int> test_labels = labels_for_model(*model, test_set);

  std::unique_ptr<Optimizer> optimizer = build_optimizer(config);
  std::vector<Tensor> params = model->parameters();

  Rng shuffle_rng(config.seed, RngStreams::kShuffle);
  Rng attack_rng(config.seed, RngStreams::kTrainAttack);

  // Weight decay flows through the optimizer (gradient of lambda*||w||^2),
  // so the loss built here is the plain data loss; the sharpness
  // perturbation is computed from it alone.
  const double weight_decay_in_loss = 0.0;

  RunRecord record;
  record.task = to_string(config.task);
  record.seed = config.seed;
  record.config_echo = config.echo;

  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.train.epochs; ++epoch) {
    for (std::size_t m : config.train.milestones) {
      if (m == epoch) optimizer->set_lr(optimizer->lr() * config.train.decay);
    }
    // Fisher-Yates with the run's shuffle stream.
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = shuffle_rng.next_below(i + 1);
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += config.train.batch_size) {
      const std::size_t end = std::min(begin + config.train.batch_size, n);
      Tensor batch_x = gather_rows(train_set.x, order, begin, end);
      std::vector<int> batch_y(end - begin);
      for (std::size_t i = begin; i < end; ++i) batch_y[i - begin] = train_labels[order[i]];

      try {
        double batch_loss = 0.0;
        if (config.optim.mode == TrainMode::kSam) {
          // Report the unperturbed data loss; the builder runs again at the
          // climbed point.
          bool seen = false;
          sam_step(
              params,
              [&] {
                const Tensor batch_loss_tensor =
                    loss(*model, batch_x, batch_y, weight_decay_in_loss);
                if (!seen) {
                  batch_loss = batch_loss_tensor.item();
                  seen = true;
                }
                return batch_loss_tensor;
              },
              *optimizer, config.optim.sam);
        } else {
          if (config.optim.mode == TrainMode::kAdversarial) {
            const AttackResult attacked =
                pgd(*model, batch_x, batch_y, config.optim.attack, &attack_rng);
            batch_x = attacked.x_adv;
          }
          Tape tape;
          const Tensor batch_loss_tensor = loss(*model, batch_x, batch_y, weight_decay_in_loss);
          const Gradients grads = tape.backward(batch_loss_tensor);
          optimizer->step(params, grads);
          batch_loss = batch_loss_tensor.item();
        }
        epoch_loss += batch_loss;
        ++batches;
      } catch (const std::exception& e) {
        std::ostringstream msg;
        msg << "training aborted at epoch " << epoch << ", batch " << batches << ": " << e.what();
        throw std::runtime_error(msg.str());
      }
    }
    record.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
  }
  record.final_train_loss = record.epoch_losses.empty() ? 0.0 : record.epoch_losses.back();

  // Final evaluation.
  record.clean_accuracy = accuracy(*model, test_set.x, test_labels);
  Rng eval_rng(config.seed, RngStreams::kEvalAttack);
  Dataset eval_set = test_set;
  eval_set.y = test_labels;
  for (const AttackBudget& budget : config.eval_budgets) {
    record.robust_accuracy.emplace_back(budget.label(),
                                        robust_accuracy(*model, eval_set, budget, &eval_rng));
  }

  if (config.model.kind == "linear" && config.data.kind == "feature_model" &&
      !config.model.include_bias) {
    const auto* linear = dynamic_cast<const LinearModel*>(model.get());
    const auto w = linear->weights().values();
    record.wr_estimated = estimate_wr(std::vector<double>(w.begin(), w.end()));
  }

  record.checkpoint_path = (fs::path(config.out_dir) / "checkpoint.txt").string();
  save_checkpoint(*model, record.checkpoint_path);

  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_record_json(record, (fs::path(config.out_dir) / "run_record.json").string());
  write_csv((fs::path(config.out_dir) / "results.csv").string(), record_csv_header(record),
            {record_csv_row(record)});
  return record;
}

RunRecord run_attack(const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(config.out_dir);

  std::unique_ptr<Model> model = load_checkpoint(config.attack_checkpoint);
  const Dataset dataset = build_dataset(config, /*test_set=*/false);
  if (model->input_dim() != dataset.dim()) {
    std::ostringstream msg;
    msg << "attack: checkpoint expects " << model->input_dim() << " features but the dataset has "
        << dataset.dim();
    throw std::runtime_error(msg.str());
  }

  RunRecord record;
  record.task = to_string(config.task);
  record.seed = config.seed;
  record.config_echo = config.echo;
  record.checkpoint_path = config.attack_checkpoint;

  Dataset eval_set = dataset;
  eval_set.y = labels_for_model(*model, dataset);
  record.clean_accuracy = accuracy(*model, eval_set.x, eval_set.y);
  Rng eval_rng(config.seed, RngStreams::kEvalAttack);
  for (const AttackBudget& budget : config.eval_budgets) {
    record.robust_accuracy.emplace_back(budget.label(),
                                        robust_accuracy(*model, eval_set, budget, &eval_rng));
  }

  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_record_json(record, (fs::path(config.out_dir) / "run_record.json").string());
  write_csv((fs::path(config.out_dir) / "results.csv").string(), record_csv_header(record),
            {record_csv_row(record)});
  return record;
}

std::vector<TheoryReport> run_theory(const RunConfig& config) {
  fs::create_directories(config.out_dir);

  std::vector<TheoryReport> reports;
  for (double p : config.theory.p) {
    for (double eta : config.theory.eta) {
      for (std::int64_t n : config.theory.n) {
        FeatureModelSpec spec{p, eta, static_cast<std::size_t>(n)};
        for (double eps : config.theory.eps) {
          reports.push_back(make_theory_report(spec, eps));
        }
      }
    }
  }

  std::vector<std::string> header = {
      "p",         "eta",           "n",           "eps",        "w1_star",
      "wr_star",   "w1_at",         "wr_at",       "w1_sam",     "wr_sam_numeric",
      "wr_sam_approx", "eps_at_equiv", "eps_at_exact", "solver_iterations", "solver_residual"};
  std::vector<std::vector<std::string>> rows;
  for (const TheoryReport& r : reports) {
    std::vector<std::string> row;
    row.push_back(format_real17(r.spec.p));
    row.push_back(format_real17(r.spec.eta));
    row.push_back(std::to_string(r.spec.n));
    row.push_back(format_real17(r.eps));
    row.push_back(format_real17(r.w1_star));
    row.push_back(format_real17(r.wr_star));
    row.push_back(r.has_at ? format_real17(r.w1_at) : "");
    row.push_back(r.has_at ? format_real17(r.wr_at) : "");
    row.push_back(format_real17(r.w1_sam));
    row.push_back(format_real17(r.wr_sam_numeric));
    row.push_back(format_real17(r.wr_sam_approx));
    row.push_back(r.eps > 0.0 ? format_real17(r.eps_at_equiv) : "");
    row.push_back(r.eps > 0.0 ? format_real17(r.eps_at_exact) : "");
    row.push_back(std::to_string(r.solver.iterations));
    row.push_back(format_real17(r.solver.residual));
    rows.push_back(std::move(row));
  }
  write_csv((fs::path(config.out_dir) / "theory.csv").string(), header, rows);

  std::ofstream text((fs::path(config.out_dir) / "theory.txt").string());
  if (!text) throw std::runtime_error("cannot write theory.txt");
  for (const TheoryReport& r : reports) {
    text << "spec p=" << format_real17(r.spec.p) << " eta=" << format_real17(r.spec.eta)
         << " n=" << r.spec.n << " eps=" << format_real17(r.eps) << '\n';
    text << "  w1_star=" << format_real17(r.w1_star) << " wr_star=" << format_real17(r.wr_star)
         << '\n';
    if (r.has_at) {
      text << "  w1_at=" << format_real17(r.w1_at) << " wr_at=" << format_real17(r.wr_at) << '\n';
    } else {
      text << "  w1_at=undefined (eps >= eta)\n";
    }
    text << "  w1_sam=" << format_real17(r.w1_sam)
         << " wr_sam_numeric=" << format_real17(r.wr_sam_numeric)
         << " wr_sam_approx=" << format_real17(r.wr_sam_approx) << '\n';
    if (r.eps > 0.0) {
      text << "  eps_at_equiv=" << format_real17(r.eps_at_equiv)
           << " eps_at_exact=" << format_real17(r.eps_at_exact) << '\n';
    }
    text << "  solver: bracket=[" << format_real17(r.solver.bracket_lo) << ", "
         << format_real17(r.solver.bracket_hi) << "] iterations=" << r.solver.iterations
         << " residual=" << format_real17(r.solver.residual)
         << (r.solver.bracket_extended ? " (bracket extended)" : "") << '\n';
  }
  return reports;
}

std::vector<SweepRow> run_sweep(const RunConfig& config) {
  fs::create_directories(config.out_dir);

  // Children rebuild their RunConfig from the echoed key-value text with the
  // grid point applied, so every row revalidates and reruns independently.
  KeyValueConfig base = KeyValueConfig::parse_text(config.echo, "sweep base");
  std::vector<std::pair<std::string, std::string>> base_entries;
  for (const std::string& key : base.keys_with_prefix("")) {
    if (key.rfind("sweep.", 0) == 0) continue;
    base_entries.emplace_back(key, base.get_string(key, ""));
  }
  const std::size_t points = config.sweep.point_count();

  std::vector<SweepRow> rows(points);
  std::atomic<std::size_t> next{0};
  const int workers = std::max(1, std::min<int>(config.parallel, static_cast<int>(points)));

  const auto worker = [&] {
    while (true) {
      const std::size_t index = next.fetch_add(1);
      if (index >= points) return;
      SweepRow& row = rows[index];
      row.index = index;
      row.point = config.sweep.point(index);
      try {
        // Children drop the sweep axes, take the grid point's overrides and
        // run as plain train tasks with the derived seed.
        KeyValueConfig child = KeyValueConfig::parse_text("", "sweep child " +
                                                                  std::to_string(index));
        for (const auto& [key, value] : base_entries) child.set(key, value);
        child.set("task", "train");
        child.set("parallel", "1");
        child.set("seed", std::to_string(Rng::derive_seed(config.seed, index)));
        std::ostringstream dir;
        dir << config.out_dir << "/run_" << std::setw(3) << std::setfill('0') << index;
        child.set("out", dir.str());
        for (const auto& [path, value] : row.point) child.set(path, value);
        row.record = run_train(RunConfig::load(child));
      } catch (const std::exception& e) {
        row.record.status = std::string("error: ") + e.what();
        row.record.task = "train";
      }
    }
  };

  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  // Merged CSV: grid columns first, rows in canonical grid order (sorted
  // axis names, values cycling fastest for the first axis), identical for
  // any worker count.
  std::vector<std::string> header;
  for (const auto& [key, values] : config.sweep.axes) header.push_back(key);
  header.push_back("task");
  header.push_back("seed");
  header.push_back("final_train_loss");
  header.push_back("clean_accuracy");
  for (const AttackBudget& budget : config.eval_budgets) {
    header.push_back("robust_" + budget.label());
  }
  header.push_back("wr_estimated");
  header.push_back("status");

  std::vector<std::vector<std::string>> csv_rows;
  for (const SweepRow& row : rows) {
    std::vector<std::string> csv_row;
    for (const auto& [key, values] : config.sweep.axes) csv_row.push_back(row.point.at(key));
    const RunRecord& record = row.record;
    const bool ok = record.status == "ok";
    csv_row.push_back("train");
    csv_row.push_back(ok ? std::to_string(record.seed) : "");
    csv_row.push_back(ok ? format_real17(record.final_train_loss) : "");
    csv_row.push_back(ok ? format_real17(record.clean_accuracy) : "");
    for (std::size_t b = 0; b < config.eval_budgets.size(); ++b) {
      csv_row.push_back(ok && b < record.robust_accuracy.size()
                            ? format_real17(record.robust_accuracy[b].second)
                            : "");
    }
    csv_row.push_back(ok && record.wr_estimated ? format_real17(*record.wr_estimated) : "");
    std::string status = record.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    csv_row.push_back(status);
    csv_rows.push_back(std::move(csv_row));
  }
  write_csv((fs::path(config.out_dir) / "sweep_results.csv").string(), header, csv_rows);
  return rows;
}

void run_plot(const RunConfig& config) {
  std::ifstream in(config.plot.input);
  if (!in) throw std::runtime_error("plot: cannot open " + config.plot.input);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, ',');
    if (header.empty()) {
      header = std::move(fields);
    } else {
      rows.push_back(std::move(fields));
    }
  }
  if (header.empty()) throw std::runtime_error("plot: " + config.plot.input + " has no header");

  const auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw std::runtime_error("plot: column '" + name + "' not found in " + config.plot.input);
  };

  const std::size_t x_col = column(config.plot.x);
  std::vector<PlotSeries> series;
  for (const std::string& y_name : config.plot.y) {
    const std::size_t y_col = column(y_name);
    PlotSeries s;
    s.name = y_name;
    for (const auto& row : rows) {
      if (x_col >= row.size() || y_col >= row.size()) continue;
      if (row[x_col].empty() || row[y_col].empty()) continue;
      try {
        s.points.emplace_back(std::stod(row[x_col]), std::stod(row[y_col]));
      } catch (const std::exception&) {
        // Non-numeric cell; skip the point.
      }
    }
    if (config.plot.kind == "line") {
      std::sort(s.points.begin(), s.points.end());
    }
    series.push_back(std::move(s));
  }

  fs::create_directories(config.out_dir);
  const std::string output = config.plot.output.empty()
                                 ? (fs::path(config.out_dir) / "plot.svg").string()
                                 : config.plot.output;
  const std::string title =
      config.plot.title.empty() ? fs::path(config.plot.input).filename().string()
                                : config.plot.title;
  write_svg_plot(output, title, config.plot.x, series, config.plot.kind == "line");
}

void run_task(const RunConfig& config) {
  switch (config.task) {
    case TaskKind::kTheory:
      run_theory(config);
      return;
    case TaskKind::kTrain:
      run_train(config);
      return;
    case TaskKind::kAttack:
      run_attack(config);
      return;
    case TaskKind::kSweep:
      run_sweep(config);
      return;
    case TaskKind::kPlot:
      run_plot(config);
      return;
  }
}

}  // namespace samlab
