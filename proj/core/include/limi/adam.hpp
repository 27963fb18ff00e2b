#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "limi/param_vector.hpp"

namespace limi {

struct AdamOptions {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  AdamOptions options;

  static AdamState for_params(const ParamVector& params, AdamOptions options = {});
};

/// One bias-corrected Adam descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
/// When `trainable` is non-empty, only those segments are touched (their
/// moments included); everything else stays bitwise unchanged.
void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state,
               std::span<const std::string> trainable = {});

}  // namespace limi
