#include "limi/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "limi/error.hpp"

namespace limi {

std::string_view to_string(BoundType b) {
  return b == BoundType::kMineDv ? "mine_dv" : "cpc";
}

BoundType parse_bound_type(std::string_view s) {
  if (s == "mine_dv") return BoundType::kMineDv;
  if (s == "cpc") return BoundType::kCpc;
  throw InvalidArgument("unknown bound '" + std::string(s) + "' (mine_dv | cpc)");
}

void ScoreBatch::validate() const {
  if (joint.empty()) throw InvalidArgument("score batch has no joint scores");
  if (negative.rows != joint.size()) {
    throw DimensionError("score batch: negative rows != joint count");
  }
  if (negative.cols < 1) throw InvalidArgument("score batch needs K >= 1 negatives");
  if (!all_finite(joint) || !all_finite(negative.data)) {
    throw NumericError("score batch contains non-finite scores");
  }
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (const double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

namespace {

double mean(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Per-row log(exp(joint) + sum exp(neg)).
double row_lse(double joint, std::span<const double> neg) {
  double m = joint;
  for (const double x : neg) m = std::max(m, x);
  double s = std::exp(joint - m);
  for (const double x : neg) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

MIEstimate dv_bound(const ScoreBatch& scores) {
  scores.validate();
  const double n = static_cast<double>(scores.negative.data.size());
  const double value = mean(scores.joint) - (log_sum_exp(scores.negative.data) - std::log(n));
  return {value, BoundType::kMineDv, scores.joint.size(), scores.negative.cols, false};
}

MIEstimate infonce_bound(std::span<const double> joint, const Matrix& negative,
                         bool normalized) {
  ScoreBatch sb{{joint.begin(), joint.end()}, negative};
  sb.validate();
  double total = 0.0;
  for (std::size_t b = 0; b < joint.size(); ++b) {
    total += joint[b] - row_lse(joint[b], negative.row(b));
  }
  double value = total / static_cast<double>(joint.size());
  if (normalized) value += std::log(static_cast<double>(negative.cols + 1));
  return {value, BoundType::kCpc, joint.size(), negative.cols, normalized};
}

MIEstimate estimate(BoundType bound, const ScoreBatch& scores) {
  return bound == BoundType::kMineDv ? dv_bound(scores)
                                     : infonce_bound(scores.joint, scores.negative, true);
}

BoundGradient dv_gradient(const ScoreBatch& scores, EmaCorrection* ema) {
  scores.validate();
  const std::size_t b = scores.joint.size();
  const double n = static_cast<double>(scores.negative.data.size());
  const double lse = log_sum_exp(scores.negative.data);
  const double log_mean_exp = lse - std::log(n);

  BoundGradient g;
  g.value = mean(scores.joint) - log_mean_exp;
  g.d_joint.assign(b, 1.0 / static_cast<double>(b));
  g.d_negative = Matrix(scores.negative.rows, scores.negative.cols);

  double log_denominator = log_mean_exp;
  if (ema != nullptr) {
    if (!ema->initialized) {
      ema->log_mean_exp = log_mean_exp;
      ema->initialized = true;
    } else {
      const double a = std::log(ema->decay) + ema->log_mean_exp;
      const double c = std::log1p(-ema->decay) + log_mean_exp;
      const double m = std::max(a, c);
      ema->log_mean_exp = m + std::log(std::exp(a - m) + std::exp(c - m));
    }
    log_denominator = ema->log_mean_exp;
  }
  // d/ds_k [-log mean exp] = -exp(s_k) / (n * mean exp)
  for (std::size_t i = 0; i < scores.negative.data.size(); ++i) {
    g.d_negative.data[i] = -std::exp(scores.negative.data[i] - std::log(n) - log_denominator);
  }
  return g;
}

BoundGradient infonce_gradient(const ScoreBatch& scores) {
  scores.validate();
  const std::size_t b = scores.joint.size(), k = scores.negative.cols;
  const double inv_b = 1.0 / static_cast<double>(b);
  BoundGradient g;
  g.d_joint.assign(b, 0.0);
  g.d_negative = Matrix(b, k);
  double total = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    const auto neg = scores.negative.row(r);
    const double lse = row_lse(scores.joint[r], neg);
    total += scores.joint[r] - lse;
    g.d_joint[r] = inv_b * (1.0 - std::exp(scores.joint[r] - lse));
    auto dn = g.d_negative.row(r);
    for (std::size_t c = 0; c < k; ++c) dn[c] = -inv_b * std::exp(neg[c] - lse);
  }
  g.value = total * inv_b;
  return g;
}

BoundGradient bound_gradient(BoundType bound, const ScoreBatch& scores,
                             EmaCorrection* ema) {
  return bound == BoundType::kMineDv ? dv_gradient(scores, ema) : infonce_gradient(scores);
}

IndexMatrix shuffle_negatives(std::size_t batch, std::size_t k, Rng& rng) {
  if (batch < 2) {
    throw InvalidArgument("shuffle_negatives needs a batch of at least 2 (got " +
                          std::to_string(batch) + ")");
  }
  if (k < 1) throw InvalidArgument("shuffle_negatives needs K >= 1");
  IndexMatrix m{batch, k, std::vector<std::size_t>(batch * k)};
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t p = rng.index(batch - 1);
      if (p >= r) ++p;
      m.data[r * k + c] = p;
    }
  }
  return m;
}

double dv_bound_exact(const Matrix& joint, const Matrix& critic) {
  if (joint.rows != critic.rows || joint.cols != critic.cols) {
    throw DimensionError("dv_bound_exact: table shapes differ");
  }
  std::vector<double> pa(joint.rows, 0.0), pb(joint.cols, 0.0);
  for (std::size_t a = 0; a < joint.rows; ++a)
    for (std::size_t b = 0; b < joint.cols; ++b) {
      pa[a] += joint(a, b);
      pb[b] += joint(a, b);
    }
  double expected_f = 0.0;
  std::vector<double> log_terms;
  for (std::size_t a = 0; a < joint.rows; ++a) {
    for (std::size_t b = 0; b < joint.cols; ++b) {
      if (joint(a, b) > 0.0) expected_f += joint(a, b) * critic(a, b);
      const double q = pa[a] * pb[b];
      if (q > 0.0) log_terms.push_back(std::log(q) + critic(a, b));
    }
  }
  return expected_f - log_sum_exp(log_terms);
}

}  // namespace limi
