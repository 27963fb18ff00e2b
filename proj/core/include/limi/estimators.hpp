#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "limi/matrix.hpp"
#include "limi/rng.hpp"

namespace limi {

enum class BoundType { kMineDv, kCpc };

std::string_view to_string(BoundType b);
BoundType parse_bound_type(std::string_view s);

/// A lower-bound value in nats.
struct MIEstimate {
  double value_nats = 0.0;
  BoundType bound_type = BoundType::kMineDv;
  std::size_t n_joint = 0;
  std::size_t n_negatives = 0;  // per joint sample
  bool normalized = false;      // cpc only: log(K+1) added
};

/// Critic scores of B matched pairs and, per pair, K mismatched partners.
struct ScoreBatch {
  std::vector<double> joint;  // B
  Matrix negative;            // B x K

  void validate() const;
};

/// Scores' sensitivities of a bound, plus the bound value that produced them.
struct BoundGradient {
  double value = 0.0;
  std::vector<double> d_joint;
  Matrix d_negative;
};

/// Moving average of the DV denominator for the bias-corrected MINE gradient.
/// The reported bound value is never affected; only the gradient weights of
/// the negative scores are rescaled by the running denominator.
struct EmaCorrection {
  double decay = 0.99;
  bool initialized = false;
  double log_mean_exp = 0.0;
};

/// mean(joint) - log(mean over all negatives of exp(score)); stable log-sum-exp.
MIEstimate dv_bound(const ScoreBatch& scores);

/// mean_b [joint_b - log(exp(joint_b) + sum_k exp(neg_bk))], plus log(K+1)
/// when `normalized`.
MIEstimate infonce_bound(std::span<const double> joint, const Matrix& negative,
                         bool normalized);

/// The value training reports: dv_bound, or the normalized infonce bound.
MIEstimate estimate(BoundType bound, const ScoreBatch& scores);

BoundGradient dv_gradient(const ScoreBatch& scores, EmaCorrection* ema = nullptr);
/// Gradient of the raw (unnormalized) infonce bound; value is raw.
BoundGradient infonce_gradient(const ScoreBatch& scores);
BoundGradient bound_gradient(BoundType bound, const ScoreBatch& scores,
                             EmaCorrection* ema = nullptr);

/// Row-major B x K matrix of partner indices.
struct IndexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> data;

  std::size_t operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// For each row b, K partners drawn uniformly (with replacement) from
/// {0..B-1} \ {b}. Requires B >= 2.
IndexMatrix shuffle_negatives(std::size_t batch, std::size_t k, Rng& rng);

/// DV bound with exact expectations over a discrete joint table p(a, b) and
/// a critic table f(a, b): sum p f - log sum p(a)p(b) exp(f).
double dv_bound_exact(const Matrix& joint, const Matrix& critic);

/// log sum exp, max-shifted. Empty input gives -inf.
double log_sum_exp(std::span<const double> v);

}  // namespace limi
