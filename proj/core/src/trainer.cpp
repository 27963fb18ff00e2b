#include "limi/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "limi/adam.hpp"
#include "limi/critic.hpp"

namespace limi {

// -- configuration -----------------------------------------------------------

std::size_t TrainConfig::resolved_k() const {
  if (k_negatives != 0) return k_negatives;
  return bound == BoundType::kCpc ? batch_size - 1 : 1;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw InvalidArgument("train: batch_size must be >= 2");
  if (epochs_pretrain < 1) throw InvalidArgument("train: epochs_pretrain must be >= 1");
  if (!(learning_rate >= 0.0)) throw InvalidArgument("train: learning_rate must be >= 0");
}

std::string_view to_string(ProbeMode m) {
  return m == ProbeMode::kFrozen ? "frozen" : "finetune";
}

ProbeMode parse_probe_mode(std::string_view s) {
  if (s == "frozen") return ProbeMode::kFrozen;
  if (s == "finetune") return ProbeMode::kFinetune;
  throw InvalidArgument("unknown probe mode '" + std::string(s) + "' (frozen | finetune)");
}

void ProbeConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("probe: epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("probe: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw InvalidArgument("probe: learning_rate must be >= 0");
  if (baseline_epoch_factor < 1) {
    throw InvalidArgument("probe: baseline_epoch_factor must be >= 1");
  }
}

void DataConfig::validate() const {
  if (n_pretrain < 2 || n_labeled < 2 || n_test < 2) {
    throw InvalidArgument("data: every split needs at least 2 samples");
  }
}

std::size_t GaussianTrainConfig::resolved_k() const {
  return k_negatives != 0 ? k_negatives : batch_size - 1;
}

void GaussianTrainConfig::validate() const {
  pairs.validate();
  if (batch_size < 2) throw InvalidArgument("gaussian: batch_size must be >= 2");
  if (batch_size > pairs.n_samples) {
    throw InvalidArgument("gaussian: batch_size exceeds n_samples");
  }
  if (steps < 1) throw InvalidArgument("gaussian: steps must be >= 1");
  if (smoothing_window < 1) throw InvalidArgument("gaussian: smoothing_window must be >= 1");
  if (!(learning_rate >= 0.0)) throw InvalidArgument("gaussian: learning_rate must be >= 0");
}

// -- logs ----------------------------------------------------------------------

void TrainLog::write_steps_csv(std::ostream& out) const {
  out << "step,epoch,objective,estimate,grad_norm\n";
  for (const auto& s : steps) {
    out << s.step << ',' << s.epoch << ',' << format_double(s.objective) << ','
        << format_double(s.estimate) << ',' << format_double(s.grad_norm) << '\n';
  }
}

void TrainLog::write_epochs_csv(std::ostream& out) const {
  out << "epoch,checkpoint\n";
  for (const auto& e : epochs) out << e.epoch << ',' << e.checkpoint_id << '\n';
}

std::vector<double> smoothed(std::span<const double> values, std::size_t window) {
  if (window == 0) throw InvalidArgument("smoothing window must be >= 1");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double s = 0.0;
    for (std::size_t j = lo; j <= i; ++j) s += values[j];
    out[i] = s / static_cast<double>(i + 1 - lo);
  }
  return out;
}

TrainingAborted::TrainingAborted(const std::string& what, std::string last_checkpoint)
    : NumericError(what + " (last good checkpoint: " + last_checkpoint + ")"),
      last_checkpoint_(std::move(last_checkpoint)) {}

// -- pretraining ---------------------------------------------------------------

namespace {

void negate(ParamVector& g) {
  for (auto& x : g.values()) x = -x;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void shuffle_indices(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
}

}  // namespace

PretrainResult pretrain(std::span<const WorldSample> dataset, const ModelConfig& model_cfg,
                        const TrainConfig& config, const CheckpointFn& checkpoint) {
  Rng init(config.seed, "init");
  return pretrain_from(init_model(model_cfg, config.objective, init), dataset, model_cfg,
                       config, checkpoint);
}

PretrainResult pretrain_from(Model model, std::span<const WorldSample> dataset,
                             const ModelConfig& model_cfg, const TrainConfig& config,
                             const CheckpointFn& checkpoint) {
  config.validate();
  model_cfg.validate();
  if (dataset.size() < config.batch_size) {
    throw InvalidArgument("pretrain: dataset of " + std::to_string(dataset.size()) +
                          " samples is smaller than one batch");
  }
  Rng shuffle(config.seed, "shuffle");
  Rng negatives(config.seed, "negatives");

  AdamOptions adam;
  adam.learning_rate = config.learning_rate;
  AdamState s_image = AdamState::for_params(model.image, adam);
  AdamState s_text = AdamState::for_params(model.text, adam);
  AdamState s_critic = AdamState::for_params(model.critic, adam);

  EmaCorrection ema;
  ObjectiveOptions options;
  options.bound = config.bound;
  options.k_negatives = config.resolved_k();
  options.ema = config.ema_correction && config.bound == BoundType::kMineDv ? &ema : nullptr;

  PretrainResult res;
  std::string last_good = "none";
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batches = dataset.size() / config.batch_size;
  std::vector<PairRef> batch(config.batch_size);
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs_pretrain; ++epoch) {
    const auto t0 = Clock::now();
    shuffle_indices(order, shuffle);
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t i = 0; i < config.batch_size; ++i) {
        const auto& s = dataset[order[b * config.batch_size + i]];
        batch[i] = {&s.image, &s.report};
      }
      ModelGradient g;
      try {
        g = model_objective(config.objective, batch, model_cfg, model, options, negatives);
      } catch (const NumericError& e) {
        throw TrainingAborted(std::string("step ") + std::to_string(step) + ": " + e.what(),
                              last_good);
      }
      const double norm = g.norm();
      if (!std::isfinite(g.objective) || !std::isfinite(norm)) {
        throw TrainingAborted("non-finite objective at step " + std::to_string(step),
                              last_good);
      }
      negate(g.grad.image);
      negate(g.grad.text);
      negate(g.grad.critic);
      adam_step(model.image, g.grad.image, s_image);
      adam_step(model.text, g.grad.text, s_text);
      adam_step(model.critic, g.grad.critic, s_critic);
      if (!all_finite(model.image.values()) || !all_finite(model.text.values()) ||
          !all_finite(model.critic.values())) {
        throw TrainingAborted("non-finite parameters after step " + std::to_string(step),
                              last_good);
      }
      res.log.steps.push_back({step, epoch, g.objective, g.estimate.value_nats, norm});
      ++step;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.checkpoint_id = checkpoint ? checkpoint(epoch, model) : "epoch" + std::to_string(epoch);
    rec.wall_seconds = seconds_since(t0);
    last_good = rec.checkpoint_id;
    res.log.epochs.push_back(rec);
  }
  res.model = std::move(model);
  return res;
}

GaussianTrainResult train_gaussian_critic(const GaussianTrainConfig& config) {
  config.validate();
  Rng data_rng(config.pairs.seed, "data");
  Rng init(config.pairs.seed, "init");
  Rng shuffle(config.pairs.seed, "shuffle");
  Rng negatives(config.pairs.seed, "negatives");
  const GaussianPairs pairs = gaussian_pairs(config.pairs, data_rng);
  const std::size_t dim = config.pairs.dim;

  const MlpSpec spec = critic_spec(dim, dim, config.critic_hidden);
  GaussianTrainResult res;
  res.analytic_mi = pairs.analytic_mi;
  res.critic = make_critic_params(spec);
  init_critic(res.critic, spec, init);

  AdamOptions adam;
  adam.learning_rate = config.learning_rate;
  AdamState state = AdamState::for_params(res.critic, adam);
  EmaCorrection ema;
  ObjectiveOptions options;
  options.bound = config.bound;
  options.k_negatives = config.resolved_k();
  options.ema = config.ema_correction && config.bound == BoundType::kMineDv ? &ema : nullptr;

  std::vector<std::size_t> order(config.pairs.n_samples);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t per_epoch = order.size() / config.batch_size;
  Matrix u(config.batch_size, dim), v(config.batch_size, dim);
  std::vector<double> estimates;

  for (std::size_t step = 0; step < config.steps; ++step) {
    const std::size_t slot = step % per_epoch;
    if (slot == 0) shuffle_indices(order, shuffle);
    for (std::size_t i = 0; i < config.batch_size; ++i) {
      const std::size_t n = order[slot * config.batch_size + i];
      std::copy_n(pairs.u.row(n).begin(), dim, u.row(i).begin());
      std::copy_n(pairs.v.row(n).begin(), dim, v.row(i).begin());
    }
    auto r = pair_feature_objective(u, v, spec, res.critic, options, negatives);
    const double norm = std::sqrt(squared_norm(r.critic_grad.values()));
    if (!std::isfinite(r.objective) || !std::isfinite(norm)) {
      throw TrainingAborted("non-finite objective at step " + std::to_string(step), "none");
    }
    negate(r.critic_grad);
    adam_step(res.critic, r.critic_grad, state);
    res.log.steps.push_back({step, step / per_epoch + 1, r.objective, r.estimate.value_nats, norm});
    estimates.push_back(r.estimate.value_nats);
  }
  const auto smooth = smoothed(estimates, config.smoothing_window);
  res.final_smoothed = smooth.back();
  // Smoothed values only count once the window is full.
  const std::size_t first = std::min(config.smoothing_window, smooth.size()) - 1;
  res.max_smoothed = *std::max_element(smooth.begin() + static_cast<std::ptrdiff_t>(first),
                                       smooth.end());
  return res;
}

// -- probes --------------------------------------------------------------------

MlpSpec probe_head_spec(std::size_t global_dim, std::size_t tasks) {
  return MlpSpec::make(global_dim, {}, tasks, Activation::kIdentity);
}

namespace {

constexpr std::size_t kEvalChunk = 256;

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Mean binary cross-entropy of logits against labels and its gradient.
double bce(const Matrix& logits, const std::vector<const std::vector<int>*>& labels,
           Matrix& d_logits) {
  d_logits = Matrix(logits.rows, logits.cols);
  const double inv = 1.0 / static_cast<double>(logits.rows * logits.cols);
  double loss = 0.0;
  for (std::size_t b = 0; b < logits.rows; ++b)
    for (std::size_t t = 0; t < logits.cols; ++t) {
      const double z = logits(b, t);
      const double y = static_cast<double>((*labels[b])[t]);
      loss += softplus(z) - y * z;
      d_logits(b, t) = (sigmoid(z) - y) * inv;
    }
  return loss * inv;
}

ParamVector make_head(std::size_t global_dim, std::size_t tasks, Rng& rng) {
  const MlpSpec spec = probe_head_spec(global_dim, tasks);
  ParamVector head;
  add_mlp_segments(head, spec, "head.");
  init_mlp(head, spec, "head.", rng);
  return head;
}

}  // namespace

ProbeResult train_probe(const ImageEncoderConfig& cfg, ParamVector image,
                        std::span<const WorldSample> labeled, std::size_t tasks,
                        const ProbeConfig& config) {
  config.validate();
  cfg.validate();
  if (labeled.empty()) throw InvalidArgument("probe: no labeled samples");
  for (const auto& s : labeled) {
    if (s.labels.size() != tasks) {
      throw DimensionError("probe: sample has " + std::to_string(s.labels.size()) +
                           " labels but the head has " + std::to_string(tasks) + " outputs");
    }
  }
  Rng head_rng(config.seed, "head");
  Rng shuffle(config.seed, "probe-shuffle");
  const MlpSpec head_spec = probe_head_spec(cfg.global_dim, tasks);

  ProbeResult res;
  res.head = make_head(cfg.global_dim, tasks, head_rng);
  const bool frozen = config.mode == ProbeMode::kFrozen;
  const FreezeSplit split = freeze_split(image);
  const std::vector<std::string> trainable = frozen ? split.tunable : std::vector<std::string>{};
  res.frozen_hash_before = segment_hash(image, split.frozen);

  AdamOptions adam;
  adam.learning_rate = config.learning_rate;
  AdamState s_image = AdamState::for_params(image, adam);
  AdamState s_head = AdamState::for_params(res.head, adam);

  // Frozen lower stack: its grid output never changes, so compute it once.
  std::vector<Matrix> cached;
  if (frozen) {
    for (std::size_t lo = 0; lo < labeled.size(); lo += kEvalChunk) {
      const std::size_t hi = std::min(labeled.size(), lo + kEvalChunk);
      std::vector<const ImageSample*> imgs;
      for (std::size_t i = lo; i < hi; ++i) imgs.push_back(&labeled[i].image);
      ImageEncoderPass pass(cfg, image);
      pass.forward_local(imgs);
      for (auto& g : pass.grids()) cached.push_back(std::move(g));
    }
  }

  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    shuffle_indices(order, shuffle);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += config.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + config.batch_size);
      const std::size_t bsz = hi - lo;
      std::vector<const std::vector<int>*> labels;
      for (std::size_t i = lo; i < hi; ++i) labels.push_back(&labeled[order[i]].labels);

      ImageEncoderPass pass(cfg, image);
      const Matrix* global = nullptr;
      if (frozen) {
        std::vector<Matrix> grids;
        for (std::size_t i = lo; i < hi; ++i) grids.push_back(cached[order[i]]);
        global = &pass.forward_global_from(grid_tensor_from(grids), bsz);
      } else {
        std::vector<const ImageSample*> imgs;
        for (std::size_t i = lo; i < hi; ++i) imgs.push_back(&labeled[order[i]].image);
        pass.forward_local(imgs);
        global = &pass.forward_global();
      }
      MlpBatch head(head_spec, res.head, "head.");
      const Matrix& logits = head.forward(*global);
      Matrix d_logits;
      const double loss = bce(logits, labels, d_logits);
      if (!std::isfinite(loss)) throw NumericError("probe: non-finite loss at step " + std::to_string(step));

      ParamVector g_head = res.head.zeros_like();
      ParamVector g_image = image.zeros_like();
      const Matrix d_global = head.backward(d_logits, g_head, true);
      Matrix d_grid = pass.backward_global(d_global, g_image, !frozen);
      if (!frozen) pass.backward_local(std::move(d_grid), g_image);
      adam_step(res.head, g_head, s_head);
      adam_step(image, g_image, s_image, trainable);

      epoch_loss += loss * static_cast<double>(bsz);
      seen += bsz;
      ++step;
    }
    res.log.steps.push_back({epoch, epoch, epoch_loss / static_cast<double>(seen), 0.0, 0.0});
    res.log.epochs.push_back({epoch, seconds_since(t0), ""});
  }
  res.frozen_hash_after = segment_hash(image, split.frozen);
  if (frozen && res.frozen_hash_after != res.frozen_hash_before) {
    throw NumericError("probe: frozen encoder segments changed during training");
  }
  res.image = std::move(image);
  return res;
}

Matrix probe_logits(const ImageEncoderConfig& cfg, const ParamVector& image,
                    const ParamVector& head, std::span<const WorldSample> samples) {
  const std::size_t tasks = head.layout("head.b0").size();
  const MlpSpec spec = probe_head_spec(cfg.global_dim, tasks);
  Matrix out(samples.size(), tasks);
  for (std::size_t lo = 0; lo < samples.size(); lo += kEvalChunk) {
    const std::size_t hi = std::min(samples.size(), lo + kEvalChunk);
    std::vector<const ImageSample*> imgs;
    for (std::size_t i = lo; i < hi; ++i) imgs.push_back(&samples[i].image);
    ImageEncoderPass pass(cfg, image);
    pass.forward_local(imgs);
    MlpBatch h(spec, head, "head.");
    const Matrix& z = h.forward(pass.forward_global());
    std::copy(z.data.begin(), z.data.end(), out.data.begin() + lo * tasks);
  }
  return out;
}

std::vector<double> probe_auc(const Matrix& logits, std::span<const WorldSample> samples) {
  if (logits.rows != samples.size()) throw DimensionError("probe_auc: row count mismatch");
  std::vector<double> out;
  std::vector<double> scores(samples.size());
  std::vector<int> labels(samples.size());
  for (std::size_t t = 0; t < logits.cols; ++t) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      scores[i] = logits(i, t);
      labels[i] = samples[i].labels.at(t);
    }
    out.push_back(auc(scores, labels));
  }
  return out;
}

LinearFit fit_linear_head(const Matrix& features, const std::vector<std::vector<int>>& labels,
                          std::size_t steps, double learning_rate, std::uint64_t seed) {
  if (labels.size() != features.rows || labels.empty()) {
    throw DimensionError("fit_linear_head: label/feature count mismatch");
  }
  const std::size_t tasks = labels.front().size();
  Rng rng(seed, "head");
  LinearFit fit;
  fit.head = make_head(features.cols, tasks, rng);
  const MlpSpec spec = probe_head_spec(features.cols, tasks);
  AdamOptions adam;
  adam.learning_rate = learning_rate;
  AdamState state = AdamState::for_params(fit.head, adam);
  std::vector<const std::vector<int>*> refs;
  for (const auto& l : labels) {
    if (l.size() != tasks) throw DimensionError("fit_linear_head: ragged labels");
    refs.push_back(&l);
  }
  Matrix d;
  for (std::size_t s = 0; s < steps; ++s) {
    MlpBatch head(spec, fit.head, "head.");
    const double loss = bce(head.forward(features), refs, d);
    ParamVector g = fit.head.zeros_like();
    head.backward(d, g, false);
    adam_step(fit.head, g, state);
    fit.losses.push_back(loss);
  }
  MlpBatch head(spec, fit.head, "head.");
  const Matrix& z = head.forward(features);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < z.rows; ++n)
    for (std::size_t t = 0; t < tasks; ++t) correct += (z(n, t) > 0.0) == (labels[n][t] == 1);
  fit.train_accuracy = static_cast<double>(correct) / static_cast<double>(z.rows * tasks);
  return fit;
}

// -- experiment matrix ---------------------------------------------------------

std::string ArmSpec::bound_name() const {
  return bound ? std::string(to_string(*bound)) : "none";
}

std::string ArmSpec::id() const {
  return arm + "/" + bound_name() + "/" + std::string(to_string(mode));
}

std::vector<ArmSpec> all_arms() {
  std::vector<ArmSpec> arms{{"image-only", std::nullopt, std::nullopt, ProbeMode::kFinetune}};
  for (Objective o : {Objective::kLocal, Objective::kGlobal})
    for (BoundType b : {BoundType::kMineDv, BoundType::kCpc})
      for (ProbeMode m : {ProbeMode::kFrozen, ProbeMode::kFinetune})
        arms.push_back({o == Objective::kLocal ? "local-mi" : "global-mi", o, b, m});
  return arms;
}

std::vector<ArmSpec> filter_arms(std::span<const ArmSpec> arms, std::string_view filter) {
  std::vector<ArmSpec> out;
  for (const auto& a : arms)
    if (filter.empty() || a.id().find(filter) != std::string::npos) out.push_back(a);
  return out;
}

GenerativeWorld matrix_world(const WorldConfig& config, std::uint64_t master_seed) {
  Rng rng(master_seed, "world");
  return sample_world(config, rng);
}

namespace {

std::vector<WorldSample> split(const GenerativeWorld& world, std::size_t n, std::uint64_t seed,
                               std::string_view name) {
  Rng rng(seed, name);
  return generate_dataset(world, n, rng);
}

}  // namespace

Splits make_splits(const GenerativeWorld& world, const DataConfig& data, std::uint64_t seed) {
  data.validate();
  return {split(world, data.n_pretrain, seed, "data/pretrain"),
          split(world, data.n_labeled, seed, "data/labeled"),
          split(world, data.n_test, seed, "data/test")};
}

MatrixResult run_experiment_matrix(const MatrixConfig& config, const MatrixHooks& hooks) {
  if (config.arms.empty()) throw InvalidArgument("matrix: no arms selected");
  if (config.seeds.empty()) throw InvalidArgument("matrix: no seeds");
  config.data.validate();
  config.train.validate();
  config.probe.validate();
  config.model.validate();
  const GenerativeWorld world = matrix_world(config.world, config.master_seed);
  const std::size_t tasks = config.world.n_regions;

  // One job per (seed, pretraining variant), the baseline being the variant
  // without pretraining. Each job serves every selected probe mode.
  struct Job {
    std::uint64_t seed;
    std::optional<Objective> objective;
    std::optional<BoundType> bound;
    std::vector<std::size_t> arm_indices;
  };
  std::vector<Job> jobs;
  for (std::uint64_t seed : config.seeds) {
    std::map<std::string, std::size_t> by_key;
    for (std::size_t a = 0; a < config.arms.size(); ++a) {
      const auto& arm = config.arms[a];
      const std::string key = arm.arm + "/" + arm.bound_name();
      auto it = by_key.find(key);
      if (it == by_key.end()) {
        by_key.emplace(key, jobs.size());
        jobs.push_back({seed, arm.objective, arm.bound, {a}});
      } else {
        jobs[it->second].arm_indices.push_back(a);
      }
    }
  }

  MatrixResult result;
  result.runs.resize(config.arms.size() * config.seeds.size());
  auto slot = [&](std::size_t arm, std::uint64_t seed) -> RunOutcome& {
    const auto s = static_cast<std::size_t>(
        std::find(config.seeds.begin(), config.seeds.end(), seed) - config.seeds.begin());
    return result.runs[arm * config.seeds.size() + s];
  };
  std::mutex mu;
  auto message = [&](const std::string& m) {
    if (hooks.on_message) {
      std::lock_guard<std::mutex> lock(mu);
      hooks.on_message(m);
    }
  };

  auto run_job = [&](const Job& job) {
    std::vector<RunOutcome> outs;
    for (std::size_t a : job.arm_indices) {
      RunOutcome o;
      o.arm = config.arms[a];
      o.seed = job.seed;
      outs.push_back(o);
    }
    try {
      const bool pretrained = job.objective.has_value();
      Splits data;
      data.labeled = split(world, config.data.n_labeled, job.seed, "data/labeled");
      data.test = split(world, config.data.n_test, job.seed, "data/test");
      ParamVector image;
      TrainLog pre_log;
      const std::string key = outs.front().arm.arm + "/" + outs.front().arm.bound_name();
      if (pretrained) {
        data.pretrain = split(world, config.data.n_pretrain, job.seed, "data/pretrain");
        TrainConfig tc = config.train;
        tc.objective = *job.objective;
        tc.bound = *job.bound;
        tc.seed = job.seed;
        message("pretrain " + key + " seed " + std::to_string(job.seed));
        auto pre = pretrain(data.pretrain, config.model, tc);
        if (hooks.on_pretrained) {
          std::lock_guard<std::mutex> lock(mu);
          hooks.on_pretrained(key, job.seed, pre.model);
        }
        image = std::move(pre.model.image);
        pre_log = std::move(pre.log);
        data.pretrain.clear();
        data.pretrain.shrink_to_fit();
      } else {
        Rng init(job.seed, "init");
        image = make_image_encoder_params(config.model.image);
        init_image_encoder(image, config.model.image, init);
      }
      for (auto& o : outs) {
        try {
          ProbeConfig pc = config.probe;
          pc.mode = o.arm.mode;
          pc.seed = job.seed;
          if (!pretrained) pc.epochs *= pc.baseline_epoch_factor;
          message("probe " + o.arm.id() + " seed " + std::to_string(job.seed));
          auto probe = train_probe(config.model.image, image, data.labeled, tasks, pc);
          o.task_auc = probe_auc(
              probe_logits(config.model.image, probe.image, probe.head, data.test), data.test);
          o.pretrain_log = pre_log;
          o.probe_log = std::move(probe.log);
          o.frozen_hash_before = probe.frozen_hash_before;
          o.frozen_hash_after = probe.frozen_hash_after;
          o.ok = true;
        } catch (const std::exception& e) {
          o.error = e.what();
        }
      }
    } catch (const std::exception& e) {
      for (auto& o : outs)
        if (!o.ok && o.error.empty()) o.error = e.what();
    }
    std::lock_guard<std::mutex> lock(mu);
    for (auto& o : outs) {
      if (hooks.on_run) hooks.on_run(o);
      const std::size_t a = static_cast<std::size_t>(
          std::find_if(config.arms.begin(), config.arms.end(),
                       [&](const ArmSpec& s) { return s.id() == o.arm.id(); }) -
          config.arms.begin());
      slot(a, o.seed) = std::move(o);
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(config.threads, jobs.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) run_job(jobs[j]);
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  result.table = results_table(result.runs, config.arms, tasks);
  return result;
}

std::vector<ResultsRow> results_table(std::span<const RunOutcome> runs,
                                      std::span<const ArmSpec> arms, std::size_t tasks) {
  std::vector<ResultsRow> rows;
  for (const auto& arm : arms) {
    std::vector<const RunOutcome*> done;
    for (const auto& r : runs)
      if (r.ok && r.arm.id() == arm.id() && r.task_auc.size() == tasks) done.push_back(&r);
    if (done.empty()) continue;
    const std::string bound = arm.bound_name();
    const std::string mode(to_string(arm.mode));
    std::vector<double> means(done.size(), 0.0);
    for (std::size_t t = 0; t < tasks; ++t) {
      std::vector<double> v;
      for (std::size_t i = 0; i < done.size(); ++i) {
        v.push_back(done[i]->task_auc[t]);
        means[i] += done[i]->task_auc[t] / static_cast<double>(tasks);
      }
      rows.push_back(make_row(arm.arm, bound, mode, "region" + std::to_string(t), v));
    }
    rows.push_back(make_row(arm.arm, bound, mode, "mean", means));
  }
  return rows;
}

}  // namespace limi
