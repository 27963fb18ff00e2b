#include "limi/critic.hpp"

#include "limi/error.hpp"

namespace limi {

MlpSpec critic_spec(std::size_t image_dim, std::size_t text_dim,
                    std::span<const std::size_t> hidden) {
  return MlpSpec::make(image_dim + text_dim, hidden, 1, Activation::kRelu);
}

ParamVector make_critic_params(const MlpSpec& spec) {
  ParamVector p;
  add_mlp_segments(p, spec, "");
  return p;
}

void init_critic(ParamVector& params, const MlpSpec& spec, Rng& rng) {
  init_mlp(params, spec, "", rng);
}

double critic_score(std::span<const double> image_feat,
                    std::span<const double> text_feat, const MlpSpec& spec,
                    const ParamVector& critic) {
  if (image_feat.size() + text_feat.size() != spec.input_width()) {
    throw DimensionError("critic input width " +
                         std::to_string(image_feat.size() + text_feat.size()) +
                         " != " + std::to_string(spec.input_width()));
  }
  std::vector<double> x(image_feat.begin(), image_feat.end());
  x.insert(x.end(), text_feat.begin(), text_feat.end());
  return mlp_forward(spec, critic, x).front();
}

PairScorer::PairScorer(const MlpSpec& spec, const ParamVector& critic,
                       std::size_t image_dim)
    : spec_(spec), critic_(critic), image_dim_(image_dim) {
  spec_.validate();
  if (spec_.output_width() != 1) throw DimensionError("critic output width must be 1");
  if (image_dim_ >= spec_.input_width()) {
    throw DimensionError("critic image width leaves no room for text features");
  }
  // Shape check against the critic layout.
  MlpBatch probe(spec_, critic_, "");
  upper_grad_ = critic_.zeros_like();
  scratch_.resize(spec_.layers());
  for (std::size_t l = 0; l < spec_.layers(); ++l) scratch_[l].resize(spec_.widths[l + 1]);
  score_scratch_ = scratch_;
  for (std::size_t l = 0; l < spec_.layers(); ++l) {
    weights_.push_back(critic_.segment(weight_name("", l)));
    biases_.push_back(critic_.segment(bias_name("", l)));
    weight_grads_.push_back(upper_grad_.segment(weight_name("", l)));
    bias_grads_.push_back(upper_grad_.segment(bias_name("", l)));
  }
}

void PairScorer::set_features(Matrix image, Matrix text) {
  const std::size_t text_dim = spec_.input_width() - image_dim_;
  if (image.cols != image_dim_ || text.cols != text_dim) {
    throw DimensionError("critic feature widths (" + std::to_string(image.cols) + ", " +
                         std::to_string(text.cols) + ") do not match (" +
                         std::to_string(image_dim_) + ", " + std::to_string(text_dim) + ")");
  }
  image_ = std::move(image);
  text_ = std::move(text);
  const auto w0 = critic_.segment(weight_name("", 0));
  const auto b0 = critic_.segment(bias_name("", 0));
  const std::size_t h = spec_.widths[1];
  const std::vector<double> no_bias(h, 0.0);
  affine_forward(image_, w0.subspan(0, image_dim_ * h), b0, proj_image_);
  affine_forward(text_, w0.subspan(image_dim_ * h), no_bias, proj_text_);
  d_proj_image_ = Matrix(image_.rows, h);
  d_proj_text_ = Matrix(text_.rows, h);
}

double PairScorer::run(std::size_t i, std::size_t t,
                       std::vector<std::vector<double>>& acts) const {
  const std::size_t layers = spec_.layers();
  auto& a0 = acts[0];
  const auto pi = proj_image_.row(i);
  const auto pt = proj_text_.row(t);
  for (std::size_t k = 0; k < a0.size(); ++k) a0[k] = pi[k] + pt[k];
  if (layers == 1) return a0[0];
  apply_activation(spec_.activations[0], a0);
  for (std::size_t l = 1; l < layers; ++l) {
    const auto w = weights_[l];
    const auto b = biases_[l];
    const std::size_t in = spec_.widths[l], out = spec_.widths[l + 1];
    auto& o = acts[l];
    std::copy(b.begin(), b.end(), o.begin());
    const auto& x = acts[l - 1];
    for (std::size_t k = 0; k < in; ++k) {
      if (x[k] == 0.0) continue;
      axpy(x[k], w.subspan(k * out, out), o);
    }
    if (l + 1 < layers) apply_activation(spec_.activations[l], o);
  }
  return acts[layers - 1][0];
}

double PairScorer::score(std::size_t image_row, std::size_t text_row) const {
  return run(image_row, text_row, score_scratch_);
}

void PairScorer::accumulate(std::size_t image_row, std::size_t text_row, double weight) {
  if (weight == 0.0) return;
  run(image_row, text_row, scratch_);
  const std::size_t layers = spec_.layers();
  delta_.assign(1, weight);
  for (std::size_t l = layers; l-- > 1;) {
    const std::size_t in = spec_.widths[l], out = spec_.widths[l + 1];
    const auto& x = scratch_[l - 1];
    auto dw = weight_grads_[l];
    axpy(1.0, delta_, bias_grads_[l]);
    for (std::size_t k = 0; k < in; ++k) {
      if (x[k] == 0.0) continue;
      axpy(x[k], delta_, dw.subspan(k * out, out));
    }
    const auto w = weights_[l];
    delta_prev_.assign(in, 0.0);
    for (std::size_t k = 0; k < in; ++k) delta_prev_[k] = dot(w.subspan(k * out, out), delta_);
    switch (spec_.activations[l - 1]) {
      case Activation::kRelu:
        for (std::size_t k = 0; k < in; ++k)
          if (x[k] <= 0.0) delta_prev_[k] = 0.0;
        break;
      case Activation::kTanh:
        for (std::size_t k = 0; k < in; ++k) delta_prev_[k] *= 1.0 - x[k] * x[k];
        break;
      case Activation::kIdentity:
        break;
    }
    delta_.swap(delta_prev_);
  }
  axpy(1.0, delta_, d_proj_image_.row(image_row));
  axpy(1.0, delta_, d_proj_text_.row(text_row));
}

void PairScorer::finish(ParamVector& critic_grad, Matrix& d_image, Matrix& d_text) {
  const std::size_t h = spec_.widths[1];
  auto gv = critic_grad.values();
  const auto uv = upper_grad_.values();
  const auto& w0_seg = critic_.layout(weight_name("", 0));
  const auto& b0_seg = critic_.layout(bias_name("", 0));
  // Upper layers were accumulated directly; layer 0 is folded in below.
  for (std::size_t i = 0; i < gv.size(); ++i) {
    if (i >= w0_seg.offset && i < b0_seg.offset + b0_seg.size()) continue;
    gv[i] += uv[i];
  }
  const auto w0 = critic_.segment(weight_name("", 0));
  auto dw0 = critic_grad.segment(weight_name("", 0));
  auto db0 = critic_grad.segment(bias_name("", 0));
  std::vector<double> unused(h, 0.0);
  affine_backward(image_, w0.subspan(0, image_dim_ * h), d_proj_image_,
                  dw0.subspan(0, image_dim_ * h), db0, &d_image);
  affine_backward(text_, w0.subspan(image_dim_ * h), d_proj_text_,
                  dw0.subspan(image_dim_ * h), unused, &d_text);
  upper_grad_.fill(0.0);
  d_proj_image_.fill(0.0);
  d_proj_text_.fill(0.0);
}

}  // namespace limi
