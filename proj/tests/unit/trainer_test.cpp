#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "limi/error.hpp"
#include "limi/trainer.hpp"
#include "test_util.hpp"

namespace limi {
namespace {

struct Setup {
  WorldConfig world;
  ModelConfig model;
  GenerativeWorld gen;
};

Setup small_setup() {
  Setup s;
  s.world.image_size = 16;
  s.model.image.image_size = 16;
  s.model.image.local_channels = {4, 8};
  s.model.image.global_channels = 8;
  s.model.image.global_dim = 8;
  s.model.text.vocab_size = s.world.vocab_size();
  s.model.text.embed_dim = 8;
  s.model.text.hidden = 8;
  s.model.text.text_dim = 8;
  s.model.local_critic_hidden = {8};
  s.model.global_critic_hidden = {8};
  s.gen = matrix_world(s.world, 3);
  return s;
}

TrainConfig small_train(Objective o, BoundType b) {
  TrainConfig t;
  t.objective = o;
  t.bound = b;
  t.batch_size = 16;
  t.epochs_pretrain = 1;
  t.learning_rate = 1e-3;
  t.seed = 7;
  return t;
}

std::vector<WorldSample> data(const Setup& s, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return generate_dataset(s.gen, n, rng);
}

TEST(Pretrain, ZeroLearningRateLeavesParametersBitwise) {
  const auto s = small_setup();
  const auto d = data(s, 64, 1);
  for (Objective o : {Objective::kLocal, Objective::kGlobal}) {
    Rng rng(5);
    const Model start = init_model(s.model, o, rng);
    auto cfg = small_train(o, BoundType::kCpc);
    cfg.learning_rate = 0.0;
    cfg.epochs_pretrain = 2;
    const auto r = pretrain_from(start, d, s.model, cfg);
    EXPECT_EQ(r.model, start);
    EXPECT_EQ(r.log.steps.size(), 8u);
  }
}

TEST(Pretrain, SameSeedIsBitwiseReproducible) {
  const auto s = small_setup();
  const auto d = data(s, 64, 2);
  const auto cfg = small_train(Objective::kLocal, BoundType::kMineDv);
  const auto a = pretrain(d, s.model, cfg);
  const auto b = pretrain(d, s.model, cfg);
  EXPECT_EQ(a.model, b.model);
  std::ostringstream la, lb;
  a.log.write_steps_csv(la);
  b.log.write_steps_csv(lb);
  EXPECT_EQ(la.str(), lb.str());
  auto other = cfg;
  other.seed = 8;
  EXPECT_NE(pretrain(d, s.model, other).model, a.model);
}

TEST(Pretrain, CheckpointCalledEveryEpoch) {
  const auto s = small_setup();
  const auto d = data(s, 40, 3);
  auto cfg = small_train(Objective::kGlobal, BoundType::kCpc);
  cfg.epochs_pretrain = 3;
  std::vector<std::size_t> seen;
  const auto r = pretrain(d, s.model, cfg, [&](std::size_t epoch, const Model&) {
    seen.push_back(epoch);
    return "e" + std::to_string(epoch);
  });
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3}));
  ASSERT_EQ(r.log.epochs.size(), 3u);
  EXPECT_EQ(r.log.epochs[2].checkpoint_id, "e3");
  // 40 samples, batch 16: the trailing partial batch is dropped.
  EXPECT_EQ(r.log.steps.size(), 6u);
}

TEST(Pretrain, CpcEstimateNeverExceedsCap) {
  const auto s = small_setup();
  const auto d = data(s, 128, 4);
  for (Objective o : {Objective::kLocal, Objective::kGlobal}) {
    auto cfg = small_train(o, BoundType::kCpc);
    cfg.epochs_pretrain = 2;
    cfg.learning_rate = 3e-3;
    const double cap = std::log(static_cast<double>(cfg.resolved_k() + 1));
    for (const auto& st : pretrain(d, s.model, cfg).log.steps) EXPECT_LE(st.estimate, cap);
  }
}

TEST(Pretrain, NonFiniteUpdateAborts) {
  const auto s = small_setup();
  const auto d = data(s, 64, 5);
  auto cfg = small_train(Objective::kGlobal, BoundType::kMineDv);
  cfg.learning_rate = 1e300;
  cfg.epochs_pretrain = 3;
  EXPECT_THROW(pretrain(d, s.model, cfg, [](std::size_t e, const Model&) {
                 return "ckpt" + std::to_string(e);
               }),
               TrainingAborted);
}

TEST(Smoothed, TrailingWindow) {
  const auto s = smoothed(std::vector<double>{1, 2, 3, 4, 5}, 2);
  EXPECT_EQ(s, (std::vector<double>{1.0, 1.5, 2.5, 3.5, 4.5}));
}

TEST(GaussianCritic, CpcAtHighCorrelationLandsBelowTruth) {
  GaussianTrainConfig cfg;
  cfg.pairs.rho = {0.9};
  cfg.pairs.seed = 1;
  cfg.bound = BoundType::kCpc;
  cfg.k_negatives = 31;
  cfg.batch_size = 32;
  cfg.steps = 2000;
  const auto r = train_gaussian_critic(cfg);
  EXPECT_NEAR(r.analytic_mi, 0.8304, 5e-5);
  EXPECT_GE(r.final_smoothed, 0.6);
  EXPECT_LE(r.final_smoothed, r.analytic_mi);
}

TEST(Probe, FrozenSegmentsBitwiseUnchanged) {
  const auto s = small_setup();
  const auto d = data(s, 64, 6);
  Rng rng(1);
  const Model m = init_model(s.model, Objective::kLocal, rng);
  ProbeConfig pc;
  pc.epochs = 2;
  pc.batch_size = 16;
  pc.learning_rate = 1e-2;
  pc.mode = ProbeMode::kFrozen;
  const auto r = train_probe(s.model.image, m.image, d, s.world.n_regions, pc);
  EXPECT_EQ(r.frozen_hash_before, r.frozen_hash_after);
  const auto split = freeze_split(m.image);
  for (const auto& name : split.frozen) {
    const auto a = m.image.segment(name), b = r.image.segment(name);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << name;
  }
  bool tunable_moved = false;
  for (const auto& name : split.tunable) {
    const auto a = m.image.segment(name), b = r.image.segment(name);
    tunable_moved |= !std::equal(a.begin(), a.end(), b.begin());
  }
  EXPECT_TRUE(tunable_moved);

  pc.mode = ProbeMode::kFinetune;
  const auto f = train_probe(s.model.image, m.image, d, s.world.n_regions, pc);
  for (const auto& seg : m.image.segments()) {
    const auto a = m.image.segment(seg.name), b = f.image.segment(seg.name);
    EXPECT_FALSE(std::equal(a.begin(), a.end(), b.begin())) << seg.name;
  }
}

TEST(Probe, LabelCountMismatchRejected) {
  const auto s = small_setup();
  const auto d = data(s, 16, 7);
  Rng rng(1);
  const Model m = init_model(s.model, Objective::kLocal, rng);
  ProbeConfig pc;
  pc.epochs = 1;
  EXPECT_THROW(train_probe(s.model.image, m.image, d, s.world.n_regions + 1, pc), Error);
}

TEST(Probe, SeparableFeaturesReachFullAccuracy) {
  // Points within 0.5 of either separating plane are rejected, so both
  // tasks are separable with a margin.
  Rng rng(9);
  const std::size_t n = 200, dim = 5;
  Matrix x(n, dim);
  std::vector<std::vector<int>> labels(n, std::vector<int>(2));
  for (std::size_t i = 0; i < n;) {
    test::fill_normal(x.row(i), rng);
    const double a = x(i, 0) + 0.5 * x(i, 3), b = x(i, 2) - x(i, 4);
    if (std::abs(a) < 0.5 || std::abs(b) < 0.5) continue;
    labels[i] = {a > 0.0 ? 1 : 0, b > 0.0 ? 1 : 0};
    ++i;
  }
  const auto fit = fit_linear_head(x, labels, 200, 0.1, 1);
  EXPECT_EQ(fit.train_accuracy, 1.0);
  EXPECT_LT(fit.losses.back(), fit.losses.front());
}

TEST(Arms, FullMatrixHasNineArms) {
  const auto arms = all_arms();
  ASSERT_EQ(arms.size(), 9u);
  std::set<std::string> ids;
  for (const auto& a : arms) ids.insert(a.id());
  EXPECT_EQ(ids.size(), 9u);
  EXPECT_EQ(arms[0].id(), "image-only/none/finetune");
  EXPECT_EQ(filter_arms(arms, "local-mi/cpc/frozen").size(), 1u);
  EXPECT_EQ(filter_arms(arms, "frozen").size(), 4u);
  EXPECT_EQ(filter_arms(arms, "").size(), 9u);
}

TEST(Matrix, SplitsAreAFunctionOfTheSeed) {
  const auto s = small_setup();
  DataConfig dc{32, 16, 16};
  const auto a = make_splits(s.gen, dc, 1);
  const auto b = make_splits(s.gen, dc, 1);
  const auto c = make_splits(s.gen, dc, 2);
  ASSERT_EQ(a.pretrain.size(), 32u);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(a.labeled[i].image, b.labeled[i].image);
    EXPECT_EQ(a.test[i].report, b.test[i].report);
  }
  EXPECT_NE(a.pretrain[0].image, c.pretrain[0].image);
  EXPECT_EQ(matrix_world(s.world, 3).hash(), s.gen.hash());
}

MatrixConfig small_matrix() {
  const auto s = small_setup();
  MatrixConfig mc;
  mc.world = s.world;
  mc.model = s.model;
  mc.data = DataConfig{64, 32, 32};
  mc.train = small_train(Objective::kLocal, BoundType::kCpc);
  mc.probe.epochs = 2;
  mc.probe.batch_size = 16;
  mc.seeds = {1};
  return mc;
}

TEST(Matrix, OneArmOneSeedGivesOneMeanRow) {
  auto mc = small_matrix();
  mc.arms = filter_arms(all_arms(), "image-only");
  const auto r = run_experiment_matrix(mc);
  ASSERT_EQ(r.runs.size(), 1u);
  EXPECT_TRUE(r.runs[0].ok) << r.runs[0].error;
  std::size_t mean_rows = 0;
  for (const auto& row : r.table) mean_rows += row.task == "mean";
  EXPECT_EQ(mean_rows, 1u);
  EXPECT_EQ(r.table.size(), mc.world.n_regions + 1);
}

TEST(Matrix, PairedArmsShareOnePretrainingRun) {
  auto mc = small_matrix();
  mc.arms = filter_arms(all_arms(), "local-mi/cpc");
  mc.seeds = {1, 2};
  std::vector<std::string> pretrained;
  MatrixHooks hooks;
  hooks.on_pretrained = [&](const std::string& key, std::uint64_t seed, const Model&) {
    pretrained.push_back(key + "#" + std::to_string(seed));
  };
  const auto r = run_experiment_matrix(mc, hooks);
  ASSERT_EQ(r.runs.size(), 4u);
  EXPECT_EQ(pretrained.size(), 2u);
  for (const auto& run : r.runs) EXPECT_TRUE(run.ok) << run.error;
  // Both probe modes of a seed start from the same pretraining log.
  EXPECT_EQ(r.runs[0].pretrain_log.steps.size(), r.runs[2].pretrain_log.steps.size());
  const auto mean = [&](const RunOutcome& o) {
    return std::accumulate(o.task_auc.begin(), o.task_auc.end(), 0.0) /
           static_cast<double>(o.task_auc.size());
  };
  std::vector<double> frozen_seeds;
  for (const auto& run : r.runs)
    if (run.arm.mode == ProbeMode::kFrozen) frozen_seeds.push_back(mean(run));
  const auto agg = aggregate(frozen_seeds);
  for (const auto& row : r.table)
    if (row.task == "mean" && row.probe_mode == "frozen") {
      EXPECT_NEAR(row.mean_auc, agg.mean, 1e-15);
      EXPECT_NEAR(row.stdev, agg.stdev, 1e-15);
      EXPECT_EQ(row.n_seeds, 2u);
    }
}

}  // namespace
}  // namespace limi
