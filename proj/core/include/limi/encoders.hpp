#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "limi/conv.hpp"
#include "limi/matrix.hpp"
#include "limi/mlp.hpp"
#include "limi/param_vector.hpp"
#include "limi/rng.hpp"

namespace limi {

/// Grayscale image, row-major, values in [0, 1].
struct ImageSample {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  friend bool operator==(const ImageSample&, const ImageSample&) = default;
};

/// A report is an ordered list of sentences; a sentence is a token-id list.
struct ReportSample {
  std::vector<std::vector<std::uint32_t>> sentences;

  friend bool operator==(const ReportSample&, const ReportSample&) = default;
};

/// side x side cells of `channels` features; cell n = row * side + col.
struct FeatureGrid {
  std::size_t side = 0;
  std::size_t channels = 0;
  Matrix features;  // (side*side) x channels

  std::size_t cells() const { return side * side; }
  std::span<const double> cell(std::size_t n) const { return features.row(n); }
};

struct GlobalFeature {
  std::vector<double> vector;
};

/// One feature row per sentence, in report order.
struct SentencePack {
  Matrix features;  // sentences x text_dim

  std::size_t size() const { return features.rows; }
};

struct ImageEncoderConfig {
  std::size_t image_size = 32;
  std::vector<std::size_t> local_channels{8, 16, 32};
  std::size_t global_channels = 64;
  std::size_t global_dim = 64;

  /// image_size / 2^blocks; every block halves the resolution.
  std::size_t grid_side() const;
  std::size_t grid_channels() const { return local_channels.back(); }
  ConvGeometry local_block(std::size_t i) const;
  ConvGeometry global_block() const;
  MlpSpec global_dense() const;
  void validate() const;
};

struct TextEncoderConfig {
  std::size_t vocab_size = 64;
  std::size_t embed_dim = 32;
  std::size_t hidden = 32;
  std::size_t text_dim = 32;

  MlpSpec mlp() const;
  void validate() const;
};

/// Segments: conv<i>.w/.b for the local stack, global.conv.w/.b and
/// global.dense.w0/.b0 for the pooled pathway. All zero.
ParamVector make_image_encoder_params(const ImageEncoderConfig& cfg);
void init_image_encoder(ParamVector& params, const ImageEncoderConfig& cfg, Rng& rng);

/// Segments: embed (vocab x embed_dim), mlp.w0/.b0/.w1/.b1. All zero.
ParamVector make_text_encoder_params(const TextEncoderConfig& cfg);
void init_text_encoder(ParamVector& params, const TextEncoderConfig& cfg, Rng& rng);

FeatureGrid encode_image_local(const ImageSample& image, const ImageEncoderConfig& cfg,
                               const ParamVector& params);
GlobalFeature encode_image_global(const ImageSample& image,
                                  const ImageEncoderConfig& cfg,
                                  const ParamVector& params);
SentencePack encode_sentences(const ReportSample& report, const TextEncoderConfig& cfg,
                              const ParamVector& params);

struct FreezeSplit {
  std::vector<std::string> frozen;
  std::vector<std::string> tunable;
};

/// The local conv stack (everything producing the FeatureGrid) is frozen;
/// the pooled global stage is tunable. Identical for local- and
/// global-pretrained encoders.
FreezeSplit freeze_split(const ParamVector& image_params);

/// Batched image encoder with cached activations for backprop.
/// The grid tensor is channel-major: grid_channels rows, batch*cells columns.
class ImageEncoderPass {
 public:
  ImageEncoderPass(const ImageEncoderConfig& cfg, const ParamVector& params);

  const Matrix& forward_local(std::span<const ImageSample* const> images);
  /// Pooled pathway on the grid produced by forward_local.
  const Matrix& forward_global();
  /// Pooled pathway on an externally supplied grid tensor (cached, frozen
  /// lower stack).
  const Matrix& forward_global_from(Matrix grid, std::size_t batch);

  std::size_t batch() const { return batch_; }
  const Matrix& grid_tensor() const { return local_.back().out; }
  /// Per-sample grids as (cells x channels) matrices.
  std::vector<Matrix> grids() const;

  /// d_global is batch x global_dim. Returns the grid-tensor gradient when
  /// `need_grid_grad`, else an empty matrix.
  Matrix backward_global(const Matrix& d_global, ParamVector& grad,
                         bool need_grid_grad);
  void backward_local(Matrix d_grid, ParamVector& grad);

 private:
  const ImageEncoderConfig& cfg_;
  const ParamVector& params_;
  std::size_t batch_ = 0;
  std::vector<ConvCache> local_;
  Matrix external_grid_;
  ConvCache global_conv_;
  MlpBatch dense_;
};

/// Reassembles per-sample (cells x channels) matrices into a grid tensor.
Matrix grid_tensor_from(std::span<const Matrix> grids);

/// Batched sentence encoder: all sentences of all reports in one pass.
class TextEncoderPass {
 public:
  TextEncoderPass(const TextEncoderConfig& cfg, const ParamVector& params);

  /// Rows are sentences, grouped by report in order.
  const Matrix& forward(std::span<const ReportSample* const> reports);
  /// First row of report r; offsets().back() is the total sentence count.
  const std::vector<std::size_t>& offsets() const { return offsets_; }

  void backward(const Matrix& d_features, ParamVector& grad);

 private:
  const TextEncoderConfig& cfg_;
  const ParamVector& params_;
  std::vector<const std::vector<std::uint32_t>*> sentences_;
  std::vector<std::size_t> offsets_;
  MlpBatch mlp_;
};

}  // namespace limi
