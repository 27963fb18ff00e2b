#pragma once

#include <span>
#include <vector>

#include "limi/matrix.hpp"
#include "limi/mlp.hpp"
#include "limi/param_vector.hpp"
#include "limi/rng.hpp"

namespace limi {

/// Concatenation critic f([image; text]) -> scalar, relu hidden layers.
MlpSpec critic_spec(std::size_t image_dim, std::size_t text_dim,
                    std::span<const std::size_t> hidden);

/// Segments w<l>/b<l> without prefix, zero-filled.
ParamVector make_critic_params(const MlpSpec& spec);
void init_critic(ParamVector& params, const MlpSpec& spec, Rng& rng);

/// Score of one (image, text) pair; inputs concatenated in that order.
double critic_score(std::span<const double> image_feat,
                    std::span<const double> text_feat, const MlpSpec& spec,
                    const ParamVector& critic);

/// Scores many (image item, text item) pairs sharing feature rows.
///
/// The first critic layer is affine in the concatenation, so it splits into
/// an image projection and a text projection computed once per row; each
/// pair then costs only the remaining layers. Gradients are accumulated per
/// pair with a caller-supplied weight and folded back into the first layer
/// by finish(). Not thread-safe: scoring reuses internal scratch space.
class PairScorer {
 public:
  PairScorer(const MlpSpec& spec, const ParamVector& critic, std::size_t image_dim);
  PairScorer(const PairScorer&) = delete;
  PairScorer& operator=(const PairScorer&) = delete;

  void set_features(Matrix image, Matrix text);

  double score(std::size_t image_row, std::size_t text_row) const;
  /// Adds weight * d score / d (critic, features).
  void accumulate(std::size_t image_row, std::size_t text_row, double weight);
  /// Writes the critic gradient (same layout as the critic) and the feature
  /// gradients. Call once after all accumulate() calls.
  void finish(ParamVector& critic_grad, Matrix& d_image, Matrix& d_text);

  std::size_t image_rows() const { return image_.rows; }
  std::size_t text_rows() const { return text_.rows; }

 private:
  double run(std::size_t i, std::size_t t, std::vector<std::vector<double>>& acts) const;

  MlpSpec spec_;
  const ParamVector& critic_;
  std::size_t image_dim_;
  Matrix image_, text_;
  Matrix proj_image_, proj_text_;
  Matrix d_proj_image_, d_proj_text_;
  ParamVector upper_grad_;
  std::vector<std::vector<double>> scratch_;
  mutable std::vector<std::vector<double>> score_scratch_;
  std::vector<std::span<const double>> weights_, biases_;
  std::vector<std::span<double>> weight_grads_, bias_grads_;
  std::vector<double> delta_, delta_prev_;
};

}  // namespace limi
