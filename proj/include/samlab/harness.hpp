#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "samlab/attacks.hpp"
#include "samlab/config.hpp"
#include "samlab/data.hpp"
#include "samlab/models.hpp"
#include "samlab/optim.hpp"
#include "samlab/theory.hpp"

namespace samlab {

enum class TaskKind { kTheory, kTrain, kAttack, kSweep, kPlot };

TaskKind task_from_string(const std::string& name);
std::string to_string(TaskKind task);

enum class TrainMode { kPlain, kSam, kAdversarial };

/// Substream ids for the per-run generator family; every consumer of
/// randomness inside one run owns a distinct stream of Rng(seed, stream).
struct RngStreams {
  static constexpr std::uint64_t kTrainData = 0;
  static constexpr std::uint64_t kModelInit = 1;
  static constexpr std::uint64_t kShuffle = 2;
  static constexpr std::uint64_t kTrainAttack = 3;
  static constexpr std::uint64_t kTestData = 4;
  static constexpr std::uint64_t kEvalAttack = 5;
};

struct DataConfig {
  std::string kind = "feature_model";  // feature_model | mixture2d | delimited
  FeatureModelSpec spec;
  std::size_t samples = 1000;
  std::size_t test_samples = 0;  // 0: evaluate on the training set
  std::vector<std::array<double, 2>> centers = {{-1.0, 0.0}, {1.0, 0.0}};
  double spread = 0.5;
  std::string path;       // delimited
  std::string test_path;  // delimited held-out set
  std::size_t dim = 0;
  LabelDomain domain = LabelDomain::kPlusMinusOne;
  int num_classes = 2;
};

struct ModelConfig {
  std::string kind = "linear";  // linear | mlp
  bool include_bias = false;
  std::vector<std::size_t> hidden = {16, 16};
  Activation activation = Activation::kRelu;
};

struct OptimizerConfig {
  std::string kind = "sgd";  // sgd | adam
  TrainMode mode = TrainMode::kPlain;
  SgdConfig sgd;
  AdamConfig adam;
  SamConfig sam;
  AttackBudget attack;  // inner maximizer for adversarial training
};

struct TrainProtocol {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  std::vector<std::size_t> milestones = {20, 26};  // lr /= 1/decay at these epochs
  double decay = 0.1;
};

struct TheoryGrid {
  std::vector<double> p = {0.6, 0.75, 0.9};
  std::vector<double> eta = {0.05, 0.1, 0.2};
  std::vector<std::int64_t> n = {5, 10, 50};
  std::vector<double> eps = {0.01, 0.05, 0.1};
};

struct SweepGrid {
  // config path -> values ('|'-separated in the config file)
  std::map<std::string, std::vector<std::string>> axes;
  std::size_t point_count() const;
  std::map<std::string, std::string> point(std::size_t index) const;
};

struct PlotSpec {
  std::string input;
  std::string x;
  std::vector<std::string> y;
  std::string kind = "line";  // line | scatter
  std::string output;
  std::string title;
};

struct RunConfig {
  TaskKind task = TaskKind::kTrain;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int parallel = 1;

  DataConfig data;
  ModelConfig model;
  OptimizerConfig optim;
  TrainProtocol train;
  std::vector<AttackBudget> eval_budgets;
  TheoryGrid theory;
  SweepGrid sweep;
  PlotSpec plot;
  std::string attack_checkpoint;

  std::string echo;  // canonical config text this run was built from

  /// Builds and validates from parsed key-value text. Every problem found is
  /// reported at once; unknown keys are errors.
  static RunConfig load(KeyValueConfig config);
};

struct RunRecord {
  std::string task;
  std::uint64_t seed = 0;
  std::vector<double> epoch_losses;
  double final_train_loss = 0.0;
  double clean_accuracy = 0.0;
  std::vector<std::pair<std::string, double>> robust_accuracy;  // budget label -> value
  std::optional<double> wr_estimated;
  double wall_seconds = 0.0;
  std::string status = "ok";
  std::string checkpoint_path;
  std::string config_echo;
};

/// Trains per the config, evaluates every budget, persists a checkpoint,
/// run_record.json and results.csv under out_dir.
RunRecord run_train(const RunConfig& config);

/// Evaluates a stored checkpoint against the configured dataset and budgets.
RunRecord run_attack(const RunConfig& config);

/// One report per (p, eta, n, eps) grid point; writes theory.csv and
/// theory.txt under out_dir.
std::vector<TheoryReport> run_theory(const RunConfig& config);

struct SweepRow {
  std::size_t index = 0;
  std::map<std::string, std::string> point;
  RunRecord record;
};

/// Independent training runs over the grid, parallel up to config.parallel
/// workers; each child gets the derived seed Rng::derive_seed(seed, index).
/// Child failures are recorded and the sweep continues. Writes
/// sweep_results.csv.
std::vector<SweepRow> run_sweep(const RunConfig& config);

/// Renders a line/scatter SVG from a results CSV.
void run_plot(const RunConfig& config);

/// Dispatches on config.task (plot included). Returns the produced records
/// where applicable.
void run_task(const RunConfig& config);

/// Deterministic %.17g formatting used by every results writer.
std::string format_real17(double value);

}  // namespace samlab
