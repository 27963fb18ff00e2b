#include "limi/encoders.hpp"

#include <algorithm>

#include "limi/error.hpp"

namespace limi {

std::size_t ImageEncoderConfig::grid_side() const {
  return image_size >> local_channels.size();
}

ConvGeometry ImageEncoderConfig::local_block(std::size_t i) const {
  ConvGeometry g;
  g.in_channels = i == 0 ? 1 : local_channels[i - 1];
  g.out_channels = local_channels[i];
  g.in_size = image_size >> i;
  // Only the last block pads on the leading side, which centres each grid
  // cell's receptive field on its own image tile.
  g.pad_before = i + 1 == local_channels.size() ? 1 : 0;
  g.pad_after = 1;
  return g;
}

ConvGeometry ImageEncoderConfig::global_block() const {
  ConvGeometry g;
  g.in_channels = grid_channels();
  g.out_channels = global_channels;
  g.in_size = grid_side();
  return g;
}

MlpSpec ImageEncoderConfig::global_dense() const {
  return MlpSpec::make(global_channels, {}, global_dim);
}

void ImageEncoderConfig::validate() const {
  if (local_channels.empty()) throw InvalidArgument("image encoder needs at least one block");
  if (std::any_of(local_channels.begin(), local_channels.end(),
                  [](std::size_t c) { return c == 0; }) ||
      global_channels == 0 || global_dim == 0) {
    throw InvalidArgument("image encoder widths must be positive");
  }
  const std::size_t factor = std::size_t{1} << local_channels.size();
  if (image_size == 0 || image_size % factor != 0) {
    throw DimensionError("image size " + std::to_string(image_size) +
                         " is not divisible by the downsampling factor " +
                         std::to_string(factor));
  }
}

MlpSpec TextEncoderConfig::mlp() const {
  const std::size_t h[] = {hidden};
  return MlpSpec::make(embed_dim, h, text_dim, Activation::kRelu);
}

void TextEncoderConfig::validate() const {
  if (vocab_size == 0 || embed_dim == 0 || hidden == 0 || text_dim == 0) {
    throw InvalidArgument("text encoder sizes must be positive");
  }
}

ParamVector make_image_encoder_params(const ImageEncoderConfig& cfg) {
  cfg.validate();
  ParamVector p;
  for (std::size_t i = 0; i < cfg.local_channels.size(); ++i) {
    const auto g = cfg.local_block(i);
    p.add_segment("conv" + std::to_string(i) + ".w", {g.out_channels, g.patch()});
    p.add_segment("conv" + std::to_string(i) + ".b", {g.out_channels});
  }
  const auto g = cfg.global_block();
  p.add_segment("global.conv.w", {g.out_channels, g.patch()});
  p.add_segment("global.conv.b", {g.out_channels});
  add_mlp_segments(p, cfg.global_dense(), "global.dense.");
  return p;
}

void init_image_encoder(ParamVector& params, const ImageEncoderConfig& cfg, Rng& rng) {
  for (std::size_t i = 0; i < cfg.local_channels.size(); ++i) {
    const auto g = cfg.local_block(i);
    glorot_uniform(params.segment("conv" + std::to_string(i) + ".w"),
                   g.patch(), g.out_channels * g.kernel * g.kernel, rng);
  }
  const auto g = cfg.global_block();
  glorot_uniform(params.segment("global.conv.w"), g.patch(),
                 g.out_channels * g.kernel * g.kernel, rng);
  init_mlp(params, cfg.global_dense(), "global.dense.", rng);
}

ParamVector make_text_encoder_params(const TextEncoderConfig& cfg) {
  cfg.validate();
  ParamVector p;
  p.add_segment("embed", {cfg.vocab_size, cfg.embed_dim});
  add_mlp_segments(p, cfg.mlp(), "mlp.");
  return p;
}

void init_text_encoder(ParamVector& params, const TextEncoderConfig& cfg, Rng& rng) {
  glorot_uniform(params.segment("embed"), cfg.vocab_size, cfg.embed_dim, rng);
  init_mlp(params, cfg.mlp(), "mlp.", rng);
}

FreezeSplit freeze_split(const ParamVector& image_params) {
  FreezeSplit split;
  for (const auto& s : image_params.segments()) {
    (s.name.starts_with("conv") ? split.frozen : split.tunable).push_back(s.name);
  }
  return split;
}

// ---------------------------------------------------------------------------

ImageEncoderPass::ImageEncoderPass(const ImageEncoderConfig& cfg,
                                   const ParamVector& params)
    : cfg_(cfg), params_(params), dense_(cfg.global_dense(), params, "global.dense.") {
  cfg_.validate();
}

const Matrix& ImageEncoderPass::forward_local(std::span<const ImageSample* const> images) {
  batch_ = images.size();
  const std::size_t n = cfg_.image_size;
  Matrix input(1, batch_ * n * n);
  for (std::size_t b = 0; b < batch_; ++b) {
    const auto& img = *images[b];
    if (img.height != n || img.width != n || img.pixels.size() != n * n) {
      throw DimensionError("image is " + std::to_string(img.height) + "x" +
                           std::to_string(img.width) + ", encoder expects " +
                           std::to_string(n) + "x" + std::to_string(n));
    }
    std::copy(img.pixels.begin(), img.pixels.end(), input.data.begin() + b * n * n);
  }
  local_.assign(cfg_.local_channels.size(), ConvCache{});
  const Matrix* x = &input;
  for (std::size_t i = 0; i < local_.size(); ++i) {
    const auto name = "conv" + std::to_string(i);
    conv_relu_forward(*x, batch_, cfg_.local_block(i), params_.segment(name + ".w"),
                      params_.segment(name + ".b"), local_[i]);
    x = &local_[i].out;
  }
  external_grid_ = Matrix{};
  return local_.back().out;
}

const Matrix& ImageEncoderPass::forward_global() {
  if (local_.empty()) throw InvalidArgument("forward_global before forward_local");
  const auto g = cfg_.global_block();
  conv_relu_forward(local_.back().out, batch_, g, params_.segment("global.conv.w"),
                    params_.segment("global.conv.b"), global_conv_);
  const std::size_t cells = g.out_size() * g.out_size();
  Matrix pooled(batch_, g.out_channels);
  for (std::size_t c = 0; c < g.out_channels; ++c) {
    const auto row = global_conv_.out.row(c);
    for (std::size_t b = 0; b < batch_; ++b) {
      double s = 0.0;
      for (std::size_t p = 0; p < cells; ++p) s += row[b * cells + p];
      pooled(b, c) = s / static_cast<double>(cells);
    }
  }
  return dense_.forward(std::move(pooled));
}

const Matrix& ImageEncoderPass::forward_global_from(Matrix grid, std::size_t batch) {
  const std::size_t cells = cfg_.grid_side() * cfg_.grid_side();
  if (grid.rows != cfg_.grid_channels() || grid.cols != batch * cells) {
    throw DimensionError("grid tensor shape does not match encoder config");
  }
  batch_ = batch;
  local_.assign(1, ConvCache{});
  local_.back().out = std::move(grid);
  external_grid_ = Matrix(1, 1);  // marks the lower stack as external
  return forward_global();
}

std::vector<Matrix> ImageEncoderPass::grids() const {
  const Matrix& t = grid_tensor();
  const std::size_t cells = cfg_.grid_side() * cfg_.grid_side();
  std::vector<Matrix> out(batch_, Matrix(cells, t.rows));
  for (std::size_t d = 0; d < t.rows; ++d) {
    const auto row = t.row(d);
    for (std::size_t b = 0; b < batch_; ++b)
      for (std::size_t c = 0; c < cells; ++c) out[b](c, d) = row[b * cells + c];
  }
  return out;
}

Matrix grid_tensor_from(std::span<const Matrix> grids) {
  if (grids.empty()) return {};
  const std::size_t cells = grids[0].rows, ch = grids[0].cols;
  Matrix t(ch, grids.size() * cells);
  for (std::size_t b = 0; b < grids.size(); ++b)
    for (std::size_t c = 0; c < cells; ++c)
      for (std::size_t d = 0; d < ch; ++d) t(d, b * cells + c) = grids[b](c, d);
  return t;
}

Matrix ImageEncoderPass::backward_global(const Matrix& d_global, ParamVector& grad,
                                         bool need_grid_grad) {
  const auto g = cfg_.global_block();
  const Matrix d_pooled = dense_.backward(d_global, grad, true);
  const std::size_t cells = g.out_size() * g.out_size();
  Matrix d_conv(g.out_channels, batch_ * cells);
  const double inv = 1.0 / static_cast<double>(cells);
  for (std::size_t c = 0; c < g.out_channels; ++c)
    for (std::size_t b = 0; b < batch_; ++b)
      for (std::size_t p = 0; p < cells; ++p) d_conv(c, b * cells + p) = d_pooled(b, c) * inv;
  Matrix d_grid;
  conv_relu_backward(d_conv, batch_, g, params_.segment("global.conv.w"), global_conv_,
                     grad.segment("global.conv.w"), grad.segment("global.conv.b"),
                     need_grid_grad ? &d_grid : nullptr);
  return d_grid;
}

void ImageEncoderPass::backward_local(Matrix d_grid, ParamVector& grad) {
  if (!external_grid_.empty()) {
    throw InvalidArgument("backward_local on an externally supplied grid");
  }
  Matrix d = std::move(d_grid);
  for (std::size_t i = local_.size(); i-- > 0;) {
    const auto name = "conv" + std::to_string(i);
    Matrix d_in;
    conv_relu_backward(d, batch_, cfg_.local_block(i), params_.segment(name + ".w"),
                       local_[i], grad.segment(name + ".w"), grad.segment(name + ".b"),
                       i > 0 ? &d_in : nullptr);
    d = std::move(d_in);
  }
}

// ---------------------------------------------------------------------------

TextEncoderPass::TextEncoderPass(const TextEncoderConfig& cfg, const ParamVector& params)
    : cfg_(cfg), params_(params), mlp_(cfg.mlp(), params, "mlp.") {}

const Matrix& TextEncoderPass::forward(std::span<const ReportSample* const> reports) {
  sentences_.clear();
  offsets_.assign(1, 0);
  for (const auto* r : reports) {
    if (r->sentences.empty()) throw InvalidArgument("report has no sentences");
    for (const auto& s : r->sentences) sentences_.push_back(&s);
    offsets_.push_back(sentences_.size());
  }
  const std::size_t e = cfg_.embed_dim;
  const auto embed = params_.segment("embed");
  Matrix means(sentences_.size(), e);
  for (std::size_t i = 0; i < sentences_.size(); ++i) {
    const auto& s = *sentences_[i];
    if (s.empty()) throw InvalidArgument("empty sentence");
    auto row = means.row(i);
    for (const auto tok : s) {
      if (tok >= cfg_.vocab_size) {
        throw InvalidArgument("unknown token id " + std::to_string(tok) +
                              " (vocab size " + std::to_string(cfg_.vocab_size) + ")");
      }
      axpy(1.0, embed.subspan(tok * e, e), row);
    }
    const double inv = 1.0 / static_cast<double>(s.size());
    for (auto& v : row) v *= inv;
  }
  return mlp_.forward(std::move(means));
}

void TextEncoderPass::backward(const Matrix& d_features, ParamVector& grad) {
  const Matrix d_means = mlp_.backward(d_features, grad, true);
  const std::size_t e = cfg_.embed_dim;
  auto d_embed = grad.segment("embed");
  for (std::size_t i = 0; i < sentences_.size(); ++i) {
    const auto& s = *sentences_[i];
    const double inv = 1.0 / static_cast<double>(s.size());
    for (const auto tok : s) axpy(inv, d_means.row(i), d_embed.subspan(tok * e, e));
  }
}

// ---------------------------------------------------------------------------

FeatureGrid encode_image_local(const ImageSample& image, const ImageEncoderConfig& cfg,
                               const ParamVector& params) {
  ImageEncoderPass pass(cfg, params);
  const ImageSample* one[] = {&image};
  pass.forward_local(one);
  FeatureGrid g;
  g.side = cfg.grid_side();
  g.channels = cfg.grid_channels();
  g.features = pass.grids().front();
  return g;
}

GlobalFeature encode_image_global(const ImageSample& image, const ImageEncoderConfig& cfg,
                                  const ParamVector& params) {
  ImageEncoderPass pass(cfg, params);
  const ImageSample* one[] = {&image};
  pass.forward_local(one);
  return GlobalFeature{pass.forward_global().data};
}

SentencePack encode_sentences(const ReportSample& report, const TextEncoderConfig& cfg,
                              const ParamVector& params) {
  TextEncoderPass pass(cfg, params);
  const ReportSample* one[] = {&report};
  return SentencePack{pass.forward(one)};
}

}  // namespace limi
