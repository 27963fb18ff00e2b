#include "limi/adam.hpp"

#include <algorithm>
#include <cmath>

#include "limi/error.hpp"

namespace limi {

void AdamOptions::validate() const {
  if (!(learning_rate >= 0.0)) throw InvalidArgument("adam: learning_rate must be >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("adam: betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("adam: epsilon must be positive");
}

AdamState AdamState::for_params(const ParamVector& params, AdamOptions options) {
  options.validate();
  AdamState s;
  s.first_moment.assign(params.size(), 0.0);
  s.second_moment.assign(params.size(), 0.0);
  s.options = options;
  return s;
}

namespace {

void update_range(std::span<double> p, std::span<const double> g,
                  std::span<double> m, std::span<double> v,
                  const AdamOptions& o, double c1, double c2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    p[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
  }
}

}  // namespace

void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state,
               std::span<const std::string> trainable) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and state sizes differ");
  }
  state.step_count += 1;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);

  auto p = params.values();
  auto g = grads.values();
  std::span<double> m = state.first_moment;
  std::span<double> v = state.second_moment;
  if (trainable.empty()) {
    update_range(p, g, m, v, o, c1, c2);
    return;
  }
  for (const auto& name : trainable) {
    const auto& seg = params.layout(name);
    const std::size_t off = seg.offset, n = seg.size();
    update_range(p.subspan(off, n), g.subspan(off, n), m.subspan(off, n),
                 v.subspan(off, n), o, c1, c2);
  }
}

}  // namespace limi
