#include "limi/local_mi.hpp"

#include <algorithm>
#include <cmath>

#include "limi/critic.hpp"
#include "limi/error.hpp"

namespace limi {

LocalScoreMap local_scores(const FeatureGrid& grid, const SentencePack& sentences,
                           const MlpSpec& critic_spec, const ParamVector& critic) {
  PairScorer scorer(critic_spec, critic, grid.channels);
  scorer.set_features(grid.features, sentences.features);
  LocalScoreMap map{Matrix(grid.cells(), sentences.size())};
  for (std::size_t n = 0; n < map.cells(); ++n)
    for (std::size_t m = 0; m < map.sentences(); ++m) map.scores(n, m) = scorer.score(n, m);
  return map;
}

RegionSelection select_regions(const LocalScoreMap& map) {
  RegionSelection sel;
  sel.cell.assign(map.sentences(), 0);
  sel.score.assign(map.sentences(), 0.0);
  for (std::size_t m = 0; m < map.sentences(); ++m) {
    std::size_t best = 0;
    for (std::size_t n = 1; n < map.cells(); ++n)
      if (map.scores(n, m) > map.scores(best, m)) best = n;
    sel.cell[m] = best;
    sel.score[m] = map.scores(best, m);
  }
  return sel;
}

namespace {

Matrix stack_rows(std::span<const Matrix> parts, std::vector<std::size_t>& offsets) {
  offsets.assign(1, 0);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    rows += p.rows;
    offsets.push_back(rows);
  }
  Matrix out(rows, parts.empty() ? 0 : parts[0].cols);
  for (std::size_t j = 0; j < parts.size(); ++j) {
    if (parts[j].cols != out.cols) throw DimensionError("feature widths differ across the batch");
    std::copy(parts[j].data.begin(), parts[j].data.end(),
              out.data.begin() + offsets[j] * out.cols);
  }
  return out;
}

std::vector<Matrix> split_rows(const Matrix& m, const std::vector<std::size_t>& offsets) {
  std::vector<Matrix> out;
  for (std::size_t j = 0; j + 1 < offsets.size(); ++j) {
    Matrix part(offsets[j + 1] - offsets[j], m.cols);
    std::copy(m.data.begin() + offsets[j] * m.cols, m.data.begin() + offsets[j + 1] * m.cols,
              part.data.begin());
    out.push_back(std::move(part));
  }
  return out;
}

}  // namespace

LocalFeatureResult local_feature_objective(std::span<const Matrix> grids,
                                           std::span<const Matrix> sentences,
                                           const MlpSpec& critic_spec,
                                           const ParamVector& critic,
                                           const ObjectiveOptions& options, Rng& rng) {
  const std::size_t batch = grids.size();
  if (batch < 2) {
    throw InvalidArgument("local objective needs a batch of at least 2 pairs (got " +
                          std::to_string(batch) + ")");
  }
  if (sentences.size() != batch) throw DimensionError("grid and report counts differ");
  const std::size_t cells = grids[0].rows;
  for (const auto& g : grids)
    if (g.rows != cells) throw DimensionError("grids of different sizes in one batch");
  for (const auto& s : sentences)
    if (s.rows == 0) throw InvalidArgument("report without sentences");

  std::vector<std::size_t> cell_off, text_off;
  PairScorer scorer(critic_spec, critic, grids[0].cols);
  scorer.set_features(stack_rows(grids, cell_off), stack_rows(sentences, text_off));

  LocalFeatureResult res;
  std::size_t max_sentences = 0;
  for (std::size_t j = 0; j < batch; ++j) {
    const std::size_t count = sentences[j].rows;
    max_sentences = std::max(max_sentences, count);
    LocalScoreMap map{Matrix(cells, count)};
    for (std::size_t n = 0; n < cells; ++n)
      for (std::size_t m = 0; m < count; ++m)
        map.scores(n, m) = scorer.score(cell_off[j] + n, text_off[j] + m);
    res.selections.push_back(select_regions(map));
  }

  struct Unit {
    std::size_t pair, cell_row, text_row;
  };
  // Best cell of grid j for an arbitrary sentence row, memoized.
  const std::size_t text_rows = text_off.back();
  std::vector<std::size_t> best(batch * text_rows, cells);
  auto best_cell = [&](std::size_t j, std::size_t t) {
    std::size_t& b = best[j * text_rows + t];
    if (b == cells) {
      b = 0;
      double top = scorer.score(cell_off[j], t);
      for (std::size_t n = 1; n < cells; ++n) {
        const double v = scorer.score(cell_off[j] + n, t);
        if (v > top) {
          top = v;
          b = n;
        }
      }
    }
    return cell_off[j] + b;
  };

  const std::size_t k = options.k_negatives;
  std::vector<Unit> units;
  std::vector<std::size_t> neg_text, neg_cell;
  for (std::size_t m = 0; m < max_sentences; ++m) {
    const IndexMatrix partners = shuffle_negatives(batch, k, rng);
    for (std::size_t j = 0; j < batch; ++j) {
      if (m >= sentences[j].rows) continue;
      const Unit unit{j, cell_off[j] + res.selections[j].cell[m], text_off[j] + m};
      units.push_back(unit);
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t p = partners(j, c);
        const std::size_t t = text_off[p] + m % sentences[p].rows;
        neg_text.push_back(t);
        neg_cell.push_back(options.local_negatives == LocalNegatives::kBestCell
                               ? best_cell(j, t)
                               : unit.cell_row);
      }
    }
  }

  ScoreBatch sb;
  sb.joint.resize(units.size());
  sb.negative = Matrix(units.size(), k);
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto& unit = units[u];
    if (options.aggregation == CellAggregation::kMax) {
      sb.joint[u] = scorer.score(unit.cell_row, unit.text_row);
    } else {
      double s = 0.0;
      for (std::size_t n = 0; n < cells; ++n)
        s += scorer.score(cell_off[unit.pair] + n, unit.text_row);
      sb.joint[u] = s / static_cast<double>(cells);
    }
    for (std::size_t c = 0; c < k; ++c)
      sb.negative(u, c) = scorer.score(neg_cell[u * k + c], neg_text[u * k + c]);
  }

  const BoundGradient g = bound_gradient(options.bound, sb, options.ema);
  const double scale = static_cast<double>(units.size()) / static_cast<double>(batch);
  res.objective = scale * g.value;
  res.estimate = estimate(options.bound, sb);

  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto& unit = units[u];
    if (options.aggregation == CellAggregation::kMax) {
      scorer.accumulate(unit.cell_row, unit.text_row, scale * g.d_joint[u]);
    } else {
      const double w = scale * g.d_joint[u] / static_cast<double>(cells);
      for (std::size_t n = 0; n < cells; ++n)
        scorer.accumulate(cell_off[unit.pair] + n, unit.text_row, w);
    }
    for (std::size_t c = 0; c < k; ++c)
      scorer.accumulate(neg_cell[u * k + c], neg_text[u * k + c], scale * g.d_negative(u, c));
  }

  res.critic_grad = critic.zeros_like();
  Matrix d_image, d_text;
  scorer.finish(res.critic_grad, d_image, d_text);
  res.d_grids = split_rows(d_image, cell_off);
  res.d_sentences = split_rows(d_text, text_off);
  return res;
}

PairFeatureResult pair_feature_objective(const Matrix& image, const Matrix& text,
                                         const MlpSpec& critic_spec,
                                         const ParamVector& critic,
                                         const ObjectiveOptions& options, Rng& rng) {
  const std::size_t batch = image.rows;
  if (text.rows != batch) throw DimensionError("image and text batch sizes differ");
  if (batch < 2) {
    throw InvalidArgument("global objective needs a batch of at least 2 pairs (got " +
                          std::to_string(batch) + ")");
  }
  const std::size_t k = options.k_negatives;
  PairScorer scorer(critic_spec, critic, image.cols);
  scorer.set_features(image, text);
  const IndexMatrix partners = shuffle_negatives(batch, k, rng);

  ScoreBatch sb;
  sb.joint.resize(batch);
  sb.negative = Matrix(batch, k);
  for (std::size_t b = 0; b < batch; ++b) {
    sb.joint[b] = scorer.score(b, b);
    for (std::size_t c = 0; c < k; ++c) sb.negative(b, c) = scorer.score(b, partners(b, c));
  }
  const BoundGradient g = bound_gradient(options.bound, sb, options.ema);
  PairFeatureResult res;
  res.objective = g.value;
  res.estimate = estimate(options.bound, sb);
  for (std::size_t b = 0; b < batch; ++b) {
    scorer.accumulate(b, b, g.d_joint[b]);
    for (std::size_t c = 0; c < k; ++c)
      scorer.accumulate(b, partners(b, c), g.d_negative(b, c));
  }
  res.critic_grad = critic.zeros_like();
  scorer.finish(res.critic_grad, res.d_image, res.d_text);
  return res;
}

double ModelGradient::norm() const {
  return std::sqrt(squared_norm(grad.image.values()) + squared_norm(grad.text.values()) +
                   squared_norm(grad.critic.values()));
}

namespace {

struct EncodedBatch {
  std::vector<const ImageSample*> images;
  std::vector<const ReportSample*> reports;
};

EncodedBatch unzip(std::span<const PairRef> batch) {
  EncodedBatch e;
  for (const auto& p : batch) {
    e.images.push_back(p.image);
    e.reports.push_back(p.report);
  }
  return e;
}

}  // namespace

ModelGradient local_objective(std::span<const PairRef> batch, const ModelConfig& cfg,
                              const Model& model, const ObjectiveOptions& options,
                              Rng& rng) {
  const auto refs = unzip(batch);
  ImageEncoderPass image(cfg.image, model.image);
  image.forward_local(refs.images);
  const std::vector<Matrix> grids = image.grids();

  TextEncoderPass text(cfg.text, model.text);
  const Matrix& feats = text.forward(refs.reports);
  const auto sentence_feats = split_rows(feats, text.offsets());

  const auto spec = cfg.critic(Objective::kLocal);
  auto res = local_feature_objective(grids, sentence_feats, spec, model.critic, options, rng);

  ModelGradient out;
  out.objective = res.objective;
  out.estimate = res.estimate;
  out.grad.image = model.image.zeros_like();
  out.grad.text = model.text.zeros_like();
  out.grad.critic = std::move(res.critic_grad);
  image.backward_local(grid_tensor_from(res.d_grids), out.grad.image);
  std::vector<std::size_t> offsets;
  text.backward(stack_rows(res.d_sentences, offsets), out.grad.text);
  return out;
}

ModelGradient global_objective(std::span<const PairRef> batch, const ModelConfig& cfg,
                               const Model& model, const ObjectiveOptions& options,
                               Rng& rng) {
  const auto refs = unzip(batch);
  ImageEncoderPass image(cfg.image, model.image);
  image.forward_local(refs.images);
  const Matrix image_feats = image.forward_global();

  TextEncoderPass text(cfg.text, model.text);
  const Matrix& feats = text.forward(refs.reports);
  const auto& off = text.offsets();
  Matrix report_feats(batch.size(), feats.cols);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double inv = 1.0 / static_cast<double>(off[b + 1] - off[b]);
    for (std::size_t s = off[b]; s < off[b + 1]; ++s) axpy(inv, feats.row(s), report_feats.row(b));
  }

  const auto spec = cfg.critic(Objective::kGlobal);
  auto res = pair_feature_objective(image_feats, report_feats, spec, model.critic, options, rng);

  ModelGradient out;
  out.objective = res.objective;
  out.estimate = res.estimate;
  out.grad.image = model.image.zeros_like();
  out.grad.text = model.text.zeros_like();
  out.grad.critic = std::move(res.critic_grad);
  Matrix d_grid = image.backward_global(res.d_image, out.grad.image, true);
  image.backward_local(std::move(d_grid), out.grad.image);

  Matrix d_feats(feats.rows, feats.cols);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double inv = 1.0 / static_cast<double>(off[b + 1] - off[b]);
    for (std::size_t s = off[b]; s < off[b + 1]; ++s) axpy(inv, res.d_text.row(b), d_feats.row(s));
  }
  text.backward(d_feats, out.grad.text);
  return out;
}

ModelGradient model_objective(Objective objective, std::span<const PairRef> batch,
                              const ModelConfig& cfg, const Model& model,
                              const ObjectiveOptions& options, Rng& rng) {
  return objective == Objective::kLocal
             ? local_objective(batch, cfg, model, options, rng)
             : global_objective(batch, cfg, model, options, rng);
}

}  // namespace limi
