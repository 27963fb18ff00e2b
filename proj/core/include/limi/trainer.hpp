#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "limi/error.hpp"
#include "limi/estimators.hpp"
#include "limi/eval.hpp"
#include "limi/gaussian.hpp"
#include "limi/local_mi.hpp"
#include "limi/model.hpp"
#include "limi/synthetic_world.hpp"

namespace limi {

// -- configuration -----------------------------------------------------------

struct TrainConfig {
  Objective objective = Objective::kLocal;
  BoundType bound = BoundType::kCpc;
  std::size_t batch_size = 64;
  std::size_t epochs_pretrain = 5;
  double learning_rate = 5e-4;
  std::uint64_t seed = 0;
  bool ema_correction = false;
  /// 0 selects the default: batch_size - 1 for cpc, 1 for mine_dv.
  std::size_t k_negatives = 0;

  std::size_t resolved_k() const;
  void validate() const;
};

enum class ProbeMode { kFrozen, kFinetune };

std::string_view to_string(ProbeMode m);
ProbeMode parse_probe_mode(std::string_view s);

struct ProbeConfig {
  ProbeMode mode = ProbeMode::kFrozen;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 5e-4;
  /// Epoch multiplier for the supervised image-only baseline.
  std::size_t baseline_epoch_factor = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DataConfig {
  std::size_t n_pretrain = 20000;
  std::size_t n_labeled = 2000;
  std::size_t n_test = 2000;

  void validate() const;
};

/// Critic-only training on Gaussian pairs (encoders are the identity).
struct GaussianTrainConfig {
  GaussianPairConfig pairs;
  BoundType bound = BoundType::kMineDv;
  std::size_t k_negatives = 0;  // 0: batch_size - 1
  std::size_t batch_size = 64;
  std::size_t steps = 2000;
  std::vector<std::size_t> critic_hidden{32, 32};
  double learning_rate = 5e-4;
  std::size_t smoothing_window = 100;
  bool ema_correction = false;

  std::size_t resolved_k() const;
  void validate() const;
};

// -- logs ----------------------------------------------------------------------

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double objective = 0.0;
  double estimate = 0.0;  // nats
  double grad_norm = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double wall_seconds = 0.0;
  std::string checkpoint_id;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  /// step,epoch,objective,estimate,grad_norm
  void write_steps_csv(std::ostream& out) const;
  /// epoch,checkpoint. Wall times are left out so files stay reproducible.
  void write_epochs_csv(std::ostream& out) const;
};

/// Trailing moving average with the given window (shorter at the start).
std::vector<double> smoothed(std::span<const double> values, std::size_t window);

/// Raised when an update produces a non-finite objective or parameter.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::string last_checkpoint);
  const std::string& last_checkpoint() const { return last_checkpoint_; }

 private:
  std::string last_checkpoint_;
};

// -- pretraining ---------------------------------------------------------------

/// Called after every epoch with the current model; returns a checkpoint id.
using CheckpointFn = std::function<std::string(std::size_t epoch, const Model& model)>;

struct PretrainResult {
  Model model;
  TrainLog log;
};

/// Joint ascent of both encoders and the critic on the selected bound.
/// Minibatches are reshuffled every epoch; a trailing partial batch is
/// dropped. Randomness: init, shuffle and negatives streams of config.seed.
PretrainResult pretrain(std::span<const WorldSample> dataset, const ModelConfig& model_cfg,
                        const TrainConfig& config, const CheckpointFn& checkpoint = {});

/// Same, starting from an existing model.
PretrainResult pretrain_from(Model model, std::span<const WorldSample> dataset,
                             const ModelConfig& model_cfg, const TrainConfig& config,
                             const CheckpointFn& checkpoint = {});

struct GaussianTrainResult {
  ParamVector critic;
  TrainLog log;
  double analytic_mi = 0.0;
  double final_smoothed = 0.0;
  double max_smoothed = 0.0;
};

GaussianTrainResult train_gaussian_critic(const GaussianTrainConfig& config);

// -- probes --------------------------------------------------------------------

/// Linear head [global_dim -> tasks] with segments head.w0 / head.b0.
MlpSpec probe_head_spec(std::size_t global_dim, std::size_t tasks);

struct ProbeResult {
  ParamVector image;  // encoder after probe training
  ParamVector head;
  TrainLog log;       // objective = mean BCE per epoch, estimate unused
  std::uint64_t frozen_hash_before = 0;
  std::uint64_t frozen_hash_after = 0;
};

/// Trains the classification head (and, in finetune mode, the whole image
/// encoder) with per-task binary cross-entropy. In frozen mode the
/// freeze_split() frozen segments are excluded from every update and their
/// hash is checked before returning.
ProbeResult train_probe(const ImageEncoderConfig& cfg, ParamVector image,
                        std::span<const WorldSample> labeled, std::size_t tasks,
                        const ProbeConfig& config);

/// Logits for every sample, samples x tasks.
Matrix probe_logits(const ImageEncoderConfig& cfg, const ParamVector& image,
                    const ParamVector& head, std::span<const WorldSample> samples);

/// Per-task AUC of the logits against the samples' labels.
std::vector<double> probe_auc(const Matrix& logits, std::span<const WorldSample> samples);

/// Head fit on fixed features (no encoder): for testing the probe optimizer.
struct LinearFit {
  ParamVector head;
  std::vector<double> losses;
  double train_accuracy = 0.0;
};
LinearFit fit_linear_head(const Matrix& features, const std::vector<std::vector<int>>& labels,
                          std::size_t steps, double learning_rate, std::uint64_t seed);

// -- experiment matrix ---------------------------------------------------------

struct ArmSpec {
  std::string arm;  // image-only | local-mi | global-mi
  std::optional<Objective> objective;
  std::optional<BoundType> bound;
  ProbeMode mode = ProbeMode::kFinetune;

  /// e.g. "local-mi/cpc/finetune" or "image-only/none/finetune".
  std::string id() const;
  std::string bound_name() const;
};

/// image-only, then {local, global} x {mine_dv, cpc} x {frozen, finetune}.
std::vector<ArmSpec> all_arms();
/// Arms whose id contains `filter` as a substring; empty filter keeps all.
std::vector<ArmSpec> filter_arms(std::span<const ArmSpec> arms, std::string_view filter);

struct MatrixConfig {
  WorldConfig world;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;  // objective and bound are overridden per arm
  ProbeConfig probe;  // mode is overridden per arm
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<ArmSpec> arms = all_arms();
  std::size_t threads = 1;
};

struct Splits {
  std::vector<WorldSample> pretrain;
  std::vector<WorldSample> labeled;
  std::vector<WorldSample> test;
};

/// The world is a function of the master seed alone; the splits of a run
/// seed are shared by every arm.
GenerativeWorld matrix_world(const WorldConfig& config, std::uint64_t master_seed);
Splits make_splits(const GenerativeWorld& world, const DataConfig& data, std::uint64_t seed);

/// Per-run output of one (arm, seed).
struct RunOutcome {
  ArmSpec arm;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<double> task_auc;  // per region
  TrainLog pretrain_log;         // empty for the baseline
  TrainLog probe_log;
  std::uint64_t frozen_hash_before = 0;
  std::uint64_t frozen_hash_after = 0;
};

/// Hooks for persisting results as runs finish. Called from worker threads
/// under a lock, in completion order.
struct MatrixHooks {
  std::function<void(const RunOutcome&)> on_run;
  std::function<void(const std::string& key, std::uint64_t seed, const Model&)> on_pretrained;
  /// Progress lines, e.g. for stderr.
  std::function<void(const std::string&)> on_message;
};

struct MatrixResult {
  std::vector<RunOutcome> runs;  // ordered by (arm order, seed order)
  std::vector<ResultsRow> table;
};

/// Runs every arm over every seed. One pretraining run per (objective,
/// bound, seed) feeds both probe modes. A failure is recorded in its
/// outcome and the remaining runs proceed.
MatrixResult run_experiment_matrix(const MatrixConfig& config, const MatrixHooks& hooks = {});

/// ResultsTable rows from completed outcomes: per arm, one row per task
/// (region<n>) plus a "mean" row averaging the per-seed task means.
std::vector<ResultsRow> results_table(std::span<const RunOutcome> runs,
                                      std::span<const ArmSpec> arms, std::size_t tasks);

}  // namespace limi
