#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "limi/matrix.hpp"
#include "limi/param_vector.hpp"
#include "limi/rng.hpp"

namespace limi {

enum class Activation { kRelu, kTanh, kIdentity };

std::string_view to_string(Activation a);

/// Layer widths (input first, output last) and one activation per hidden
/// layer. The output layer is always affine.
struct MlpSpec {
  std::vector<std::size_t> widths;
  std::vector<Activation> activations;

  /// widths = {in, hidden..., out}, all hidden layers using `act`.
  static MlpSpec make(std::size_t in, std::span<const std::size_t> hidden,
                      std::size_t out, Activation act = Activation::kRelu);

  std::size_t layers() const { return widths.size() - 1; }
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  void validate() const;
};

/// Segment names used for layer `l` under `prefix`: "<prefix>w<l>" with shape
/// {in, out} and "<prefix>b<l>" with shape {out}.
std::string weight_name(std::string_view prefix, std::size_t layer);
std::string bias_name(std::string_view prefix, std::size_t layer);

void add_mlp_segments(ParamVector& params, const MlpSpec& spec,
                      std::string_view prefix);

/// Glorot-uniform in [-sqrt(6/(fan_in+fan_out)), +sqrt(...)].
void glorot_uniform(std::span<double> values, std::size_t fan_in,
                    std::size_t fan_out, Rng& rng);

/// Glorot weights, zero biases.
void init_mlp(ParamVector& params, const MlpSpec& spec, std::string_view prefix,
              Rng& rng);

std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                std::span<const double> input,
                                std::string_view prefix = "");

struct GradRecord {
  ParamVector gradient;  // same layout as the differentiated parameters
  std::vector<double> input_gradient;
  double loss = 0.0;
};

/// Gradient of dot(upstream, mlp_forward(...)) w.r.t. parameters and input.
/// `loss` holds that dot product.
GradRecord backward(const MlpSpec& spec, const ParamVector& params,
                    std::span<const double> input,
                    std::span<const double> upstream,
                    std::string_view prefix = "");

/// Row-batched MLP evaluation that keeps activations for a backward pass.
class MlpBatch {
 public:
  MlpBatch(const MlpSpec& spec, const ParamVector& params,
           std::string_view prefix);

  const Matrix& forward(Matrix input);
  const Matrix& output() const { return acts_.back(); }
  /// Index of the first layer whose output has a NaN/Inf, or -1.
  int first_nonfinite_layer() const;

  /// Accumulates into `grad` the parameter gradient of sum(upstream .* out).
  /// Returns the input gradient (empty when `need_input_grad` is false).
  Matrix backward(const Matrix& upstream, ParamVector& grad,
                  bool need_input_grad = true) const;

 private:
  MlpSpec spec_;
  const ParamVector& params_;
  std::string prefix_;
  std::vector<Matrix> acts_;
};

void apply_activation(Activation a, std::span<double> v);

}  // namespace limi
