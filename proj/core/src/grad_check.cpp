#include "limi/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "limi/error.hpp"

namespace limi {

double grad_check(const DifferentiableFn& fn, std::span<const double> point,
                  double step, std::span<const std::size_t> coords) {
  if (!(step > 0.0)) throw InvalidArgument("grad_check: step must be positive");
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<double> x(point.begin(), point.end());
  std::vector<double> analytic(x.size(), 0.0);
  std::vector<double> scratch(x.size(), 0.0);
  const double f0 = fn(x, analytic);
  if (!std::isfinite(f0)) return kInf;

  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) all[i] = i;
    coords = all;
  }

  double worst = 0.0;
  for (const std::size_t i : coords) {
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = fn(x, scratch);
    x[i] = orig - step;
    const double fm = fn(x, scratch);
    x[i] = orig;
    const double numeric = (fp - fm) / (2.0 * step);
    const double err =
        std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    if (!std::isfinite(err)) return kInf;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace limi
