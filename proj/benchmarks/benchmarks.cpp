#include <benchmark/benchmark.h>

#include <vector>

#include "limi/critic.hpp"
#include "limi/encoders.hpp"
#include "limi/eval.hpp"
#include "limi/local_mi.hpp"
#include "limi/rng.hpp"

namespace {

using namespace limi;

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& x : m.data) x = rng.normal();
  return m;
}

void BM_CriticPairScores(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto spec = critic_spec(32, 32, std::vector<std::size_t>{32, 16});
  auto critic = make_critic_params(spec);
  init_critic(critic, spec, rng);
  PairScorer scorer(spec, critic, 32);
  scorer.set_features(random_matrix(n, 32, rng), random_matrix(n, 32, rng));
  for (auto _ : state) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < n; ++t) total += scorer.score(i, t);
    benchmark::DoNotOptimize(total);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_CriticPairScores)->Arg(16)->Arg(64);

void BM_ImageEncoderLocal(benchmark::State& state) {
  const ImageEncoderConfig cfg;
  Rng rng(2);
  auto params = make_image_encoder_params(cfg);
  init_image_encoder(params, cfg, rng);
  ImageSample img{cfg.image_size, cfg.image_size,
                  std::vector<double>(cfg.image_size * cfg.image_size)};
  for (auto& p : img.pixels) p = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(encode_image_local(img, cfg, params));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ImageEncoderLocal);

void BM_LocalObjective(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const auto spec = critic_spec(32, 32, std::vector<std::size_t>{32, 16});
  auto critic = make_critic_params(spec);
  init_critic(critic, spec, rng);
  std::vector<Matrix> grids, sentences;
  for (std::size_t j = 0; j < batch; ++j) {
    grids.push_back(random_matrix(16, 32, rng));
    sentences.push_back(random_matrix(4, 32, rng));
  }
  ObjectiveOptions o;
  o.k_negatives = batch - 1;
  for (auto _ : state) {
    Rng neg(4);
    benchmark::DoNotOptimize(local_feature_objective(grids, sentences, spec, critic, o, neg));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_LocalObjective)->Arg(16)->Arg(64);

void BM_Auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = rng.normal();
    labels[i] = static_cast<int>(rng.index(2));
  }
  labels[0] = 0;
  labels[1] = 1;
  for (auto _ : state) benchmark::DoNotOptimize(auc(scores, labels));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);

}  // namespace
BENCHMARK_MAIN();
