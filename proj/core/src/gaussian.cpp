#include "limi/gaussian.hpp"

#include <cmath>
#include <string>

#include "limi/error.hpp"

namespace limi {

void GaussianPairConfig::validate() const {
  if (dim == 0) throw InvalidArgument("gaussian: dim must be >= 1");
  if (rho.size() != dim) {
    throw InvalidArgument("gaussian: expected " + std::to_string(dim) + " rho values, got " +
                          std::to_string(rho.size()));
  }
  for (double r : rho)
    if (!(std::abs(r) < 1.0)) throw InvalidArgument("gaussian: |rho| must be < 1");
  if (n_samples == 0) throw InvalidArgument("gaussian: n_samples must be >= 1");
}

double gaussian_mi(const std::vector<double>& rho) {
  double mi = 0.0;
  for (double r : rho) mi -= 0.5 * std::log1p(-r * r);
  return mi;
}

GaussianPairs gaussian_pairs(const GaussianPairConfig& config, Rng& rng) {
  config.validate();
  GaussianPairs out{Matrix(config.n_samples, config.dim), Matrix(config.n_samples, config.dim),
                    gaussian_mi(config.rho)};
  for (std::size_t n = 0; n < config.n_samples; ++n)
    for (std::size_t i = 0; i < config.dim; ++i) {
      const double r = config.rho[i];
      const double a = rng.normal();
      const double b = rng.normal();
      out.u(n, i) = a;
      out.v(n, i) = r * a + std::sqrt(1.0 - r * r) * b;
    }
  return out;
}

}  // namespace limi
