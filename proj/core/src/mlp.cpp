#include "limi/mlp.hpp"

#include <cmath>

#include "limi/error.hpp"

namespace limi {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "?";
}

MlpSpec MlpSpec::make(std::size_t in, std::span<const std::size_t> hidden,
                      std::size_t out, Activation act) {
  MlpSpec s;
  s.widths.push_back(in);
  s.widths.insert(s.widths.end(), hidden.begin(), hidden.end());
  s.widths.push_back(out);
  s.activations.assign(hidden.size(), act);
  return s;
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw InvalidArgument("MlpSpec needs at least two widths");
  for (std::size_t l = 0; l < widths.size(); ++l) {
    if (widths[l] == 0) {
      throw InvalidArgument("MlpSpec width " + std::to_string(l) + " is zero");
    }
  }
  if (activations.size() != widths.size() - 2) {
    throw InvalidArgument("MlpSpec needs one activation per hidden layer");
  }
}

std::string weight_name(std::string_view prefix, std::size_t layer) {
  return std::string(prefix) + "w" + std::to_string(layer);
}

std::string bias_name(std::string_view prefix, std::size_t layer) {
  return std::string(prefix) + "b" + std::to_string(layer);
}

void add_mlp_segments(ParamVector& params, const MlpSpec& spec,
                      std::string_view prefix) {
  spec.validate();
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    params.add_segment(weight_name(prefix, l), {spec.widths[l], spec.widths[l + 1]});
    params.add_segment(bias_name(prefix, l), {spec.widths[l + 1]});
  }
}

void glorot_uniform(std::span<double> values, std::size_t fan_in,
                    std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : values) v = rng.uniform(-a, a);
}

void init_mlp(ParamVector& params, const MlpSpec& spec, std::string_view prefix,
              Rng& rng) {
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    glorot_uniform(params.segment(weight_name(prefix, l)), spec.widths[l],
                   spec.widths[l + 1], rng);
    auto b = params.segment(bias_name(prefix, l));
    std::fill(b.begin(), b.end(), 0.0);
  }
}

void apply_activation(Activation a, std::span<double> v) {
  switch (a) {
    case Activation::kRelu:
      for (auto& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::kTanh:
      for (auto& x : v) x = std::tanh(x);
      break;
    case Activation::kIdentity:
      break;
  }
}

namespace {

void check_layer_shapes(const MlpSpec& spec, const ParamVector& params,
                        std::string_view prefix) {
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const auto wn = weight_name(prefix, l);
    const auto bn = bias_name(prefix, l);
    if (!params.has(wn) || !params.has(bn) ||
        params.layout(wn).shape !=
            std::vector<std::size_t>{spec.widths[l], spec.widths[l + 1]} ||
        params.layout(bn).shape != std::vector<std::size_t>{spec.widths[l + 1]}) {
      throw DimensionError("mlp layer " + std::to_string(l) +
                           ": parameters do not match spec widths " +
                           std::to_string(spec.widths[l]) + "->" +
                           std::to_string(spec.widths[l + 1]));
    }
  }
}

}  // namespace

MlpBatch::MlpBatch(const MlpSpec& spec, const ParamVector& params,
                   std::string_view prefix)
    : spec_(spec), params_(params), prefix_(prefix) {
  spec_.validate();
  check_layer_shapes(spec_, params_, prefix_);
}

const Matrix& MlpBatch::forward(Matrix input) {
  if (input.cols != spec_.input_width()) {
    throw DimensionError("mlp layer 0: input width " + std::to_string(input.cols) +
                         " != " + std::to_string(spec_.input_width()));
  }
  acts_.clear();
  acts_.push_back(std::move(input));
  for (std::size_t l = 0; l < spec_.layers(); ++l) {
    Matrix out;
    affine_forward(acts_.back(), params_.segment(weight_name(prefix_, l)),
                   params_.segment(bias_name(prefix_, l)), out);
    if (l + 1 < spec_.layers()) apply_activation(spec_.activations[l], out.data);
    acts_.push_back(std::move(out));
  }
  return acts_.back();
}

int MlpBatch::first_nonfinite_layer() const {
  for (std::size_t l = 1; l < acts_.size(); ++l)
    if (!all_finite(acts_[l].data)) return static_cast<int>(l - 1);
  return -1;
}

Matrix MlpBatch::backward(const Matrix& upstream, ParamVector& grad,
                          bool need_input_grad) const {
  if (acts_.empty()) throw InvalidArgument("MlpBatch::backward before forward");
  if (upstream.cols != spec_.output_width() || upstream.rows != acts_.back().rows) {
    throw DimensionError("mlp backward: upstream shape does not match output");
  }
  Matrix delta = upstream;
  for (std::size_t l = spec_.layers(); l-- > 0;) {
    if (l + 1 < spec_.layers()) {
      const Matrix& out = acts_[l + 1];
      switch (spec_.activations[l]) {
        case Activation::kRelu:
          for (std::size_t i = 0; i < delta.data.size(); ++i)
            if (out.data[i] <= 0.0) delta.data[i] = 0.0;
          break;
        case Activation::kTanh:
          for (std::size_t i = 0; i < delta.data.size(); ++i)
            delta.data[i] *= 1.0 - out.data[i] * out.data[i];
          break;
        case Activation::kIdentity:
          break;
      }
    }
    if (!all_finite(delta.data)) {
      throw NumericError("non-finite gradient in mlp layer " + std::to_string(l),
                         static_cast<int>(l));
    }
    const bool want_dx = l > 0 || need_input_grad;
    Matrix dx;
    affine_backward(acts_[l], params_.segment(weight_name(prefix_, l)), delta,
                    grad.segment(weight_name(prefix_, l)),
                    grad.segment(bias_name(prefix_, l)), want_dx ? &dx : nullptr);
    if (l == 0) return need_input_grad ? dx : Matrix{};
    delta = std::move(dx);
  }
  return {};
}

std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                std::span<const double> input,
                                std::string_view prefix) {
  MlpBatch net(spec, params, prefix);
  Matrix x(1, input.size());
  std::copy(input.begin(), input.end(), x.data.begin());
  return net.forward(std::move(x)).data;
}

GradRecord backward(const MlpSpec& spec, const ParamVector& params,
                    std::span<const double> input,
                    std::span<const double> upstream, std::string_view prefix) {
  if (upstream.size() != spec.output_width()) {
    throw DimensionError("backward: upstream length " +
                         std::to_string(upstream.size()) + " != output width " +
                         std::to_string(spec.output_width()));
  }
  MlpBatch net(spec, params, prefix);
  Matrix x(1, input.size());
  std::copy(input.begin(), input.end(), x.data.begin());
  const Matrix& out = net.forward(std::move(x));
  if (const int bad = net.first_nonfinite_layer(); bad >= 0) {
    throw NumericError("non-finite activation in mlp layer " + std::to_string(bad),
                       bad);
  }
  GradRecord rec;
  rec.gradient = params.zeros_like();
  Matrix up(1, upstream.size());
  std::copy(upstream.begin(), upstream.end(), up.data.begin());
  rec.input_gradient = net.backward(up, rec.gradient, true).data;
  rec.loss = dot(upstream, out.data);
  return rec;
}

}  // namespace limi
