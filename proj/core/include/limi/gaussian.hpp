#pragma once

#include <cstdint>
#include <vector>

#include "limi/matrix.hpp"
#include "limi/rng.hpp"

namespace limi {

struct GaussianPairConfig {
  std::size_t dim = 1;
  std::vector<double> rho{0.9};  // one per dimension, |rho| < 1
  std::size_t n_samples = 10000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Standard-normal u, v with corr(u_i, v_i) = rho_i and all other pairs
/// independent.
struct GaussianPairs {
  Matrix u;  // n x dim
  Matrix v;  // n x dim
  double analytic_mi = 0.0;
};

/// sum_i -0.5 * log(1 - rho_i^2)
double gaussian_mi(const std::vector<double>& rho);

GaussianPairs gaussian_pairs(const GaussianPairConfig& config, Rng& rng);

}  // namespace limi
