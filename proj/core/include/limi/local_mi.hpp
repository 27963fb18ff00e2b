#pragma once

#include <span>
#include <vector>

#include "limi/encoders.hpp"
#include "limi/estimators.hpp"
#include "limi/model.hpp"

namespace limi {

/// scores(n, m) = critic(grid cell n, sentence m).
struct LocalScoreMap {
  Matrix scores;  // cells x sentences

  std::size_t cells() const { return scores.rows; }
  std::size_t sentences() const { return scores.cols; }
};

/// Per sentence, the best-matching grid cell and its score.
struct RegionSelection {
  std::vector<std::size_t> cell;
  std::vector<double> score;
};

LocalScoreMap local_scores(const FeatureGrid& grid, const SentencePack& sentences,
                           const MlpSpec& critic_spec, const ParamVector& critic);

/// Column-wise argmax; ties go to the lowest (row-major) cell index.
RegionSelection select_regions(const LocalScoreMap& map);

/// How a sentence's positive score is formed from its column of cell scores.
/// kMean is a diagnostic variant only: negatives still use the max-selected
/// cell, so the two aggregations differ only in their positive terms.
enum class CellAggregation { kMax, kMean };

/// Image side of a negative (pair j's grid, partner sentence).
/// kBestCell: the partner sentence gets its own max over pair j's cells, so
///   positives and negatives are scored by the same image-level critic
///   max_n f(cell n, sentence).
/// kSelectedCell: the cell the positive selected is reused. Cheaper, but the
///   reused cell depends on the positive sentence, which lets a critic
///   separate positives from negatives without image-sentence dependence.
enum class LocalNegatives { kBestCell, kSelectedCell };

struct ObjectiveOptions {
  BoundType bound = BoundType::kCpc;
  std::size_t k_negatives = 1;
  EmaCorrection* ema = nullptr;
  CellAggregation aggregation = CellAggregation::kMax;
  LocalNegatives local_negatives = LocalNegatives::kBestCell;
};

struct LocalFeatureResult {
  double objective = 0.0;      // sum over sentences of the per-unit bound, per pair
  MIEstimate estimate;         // pooled bound over all (pair, sentence) units
  ParamVector critic_grad;
  std::vector<Matrix> d_grids;      // per pair, cells x grid channels
  std::vector<Matrix> d_sentences;  // per pair, sentences x text dim
  std::vector<RegionSelection> selections;
};

/// The summed one-way-max objective on precomputed features.
///
/// Every (pair j, sentence m) is one unit. Its positive score is the best
/// cell of grid j for sentence m; its K negatives score grid j against
/// sentence m of shuffled partner reports (sentence index taken modulo the
/// partner's sentence count), with the image side chosen per
/// options.local_negatives. One shuffle is drawn per sentence slot. The
/// bound is computed on the pooled units and scaled by the mean sentence
/// count, so a 1x1 grid with one sentence per report reduces to
/// pair_feature_objective exactly. Gradients reach only cells that won a max.
LocalFeatureResult local_feature_objective(std::span<const Matrix> grids,
                                           std::span<const Matrix> sentences,
                                           const MlpSpec& critic_spec,
                                           const ParamVector& critic,
                                           const ObjectiveOptions& options, Rng& rng);

struct PairFeatureResult {
  double objective = 0.0;
  MIEstimate estimate;
  ParamVector critic_grad;
  Matrix d_image;  // B x image dim
  Matrix d_text;   // B x text dim
};

/// Global bound on B matched feature rows; negatives pair row b's image
/// feature with shuffled partners' text features.
PairFeatureResult pair_feature_objective(const Matrix& image, const Matrix& text,
                                         const MlpSpec& critic_spec,
                                         const ParamVector& critic,
                                         const ObjectiveOptions& options, Rng& rng);

/// Objective value with gradients for every parameter group.
struct ModelGradient {
  double objective = 0.0;
  MIEstimate estimate;
  Model grad;

  double norm() const;
};

/// Encodes the batch (grid per image, feature per sentence) and evaluates
/// the local objective, back-propagating into both encoders and the critic.
ModelGradient local_objective(std::span<const PairRef> batch, const ModelConfig& cfg,
                              const Model& model, const ObjectiveOptions& options,
                              Rng& rng);

/// Pooled image feature vs. the mean of the report's sentence features.
ModelGradient global_objective(std::span<const PairRef> batch, const ModelConfig& cfg,
                               const Model& model, const ObjectiveOptions& options,
                               Rng& rng);

ModelGradient model_objective(Objective objective, std::span<const PairRef> batch,
                              const ModelConfig& cfg, const Model& model,
                              const ObjectiveOptions& options, Rng& rng);

}  // namespace limi
