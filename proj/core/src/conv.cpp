#include "limi/conv.hpp"

#include "limi/error.hpp"

namespace limi {

Matrix im2col(const Matrix& input, std::size_t batch, const ConvGeometry& g) {
  const std::size_t n = g.in_size, o = g.out_size(), k = g.kernel;
  if (input.rows != g.in_channels || input.cols != batch * n * n) {
    throw DimensionError("conv: input is " + std::to_string(input.rows) + "x" +
                         std::to_string(input.cols) + ", expected " +
                         std::to_string(g.in_channels) + "x" +
                         std::to_string(batch * n * n));
  }
  Matrix cols(g.patch(), batch * o * o);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* src = input.data.data() + c * input.cols;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* dst = cols.data.data() + ((c * k + ky) * k + kx) * cols.cols;
        for (std::size_t b = 0; b < batch; ++b) {
          const double* img = src + b * n * n;
          for (std::size_t oy = 0; oy < o; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_before);
            double* row = dst + (b * o + oy) * o;
            if (iy < 0 || iy >= static_cast<long>(n)) continue;
            for (std::size_t ox = 0; ox < o; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad_before);
              if (ix >= 0 && ix < static_cast<long>(n)) row[ox] = img[iy * n + ix];
            }
          }
        }
      }
    }
  }
  return cols;
}

void col2im_add(const Matrix& cols, std::size_t batch, const ConvGeometry& g,
                Matrix& d_input) {
  const std::size_t n = g.in_size, o = g.out_size(), k = g.kernel;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    double* dst = d_input.data.data() + c * d_input.cols;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* src = cols.data.data() + ((c * k + ky) * k + kx) * cols.cols;
        for (std::size_t b = 0; b < batch; ++b) {
          double* img = dst + b * n * n;
          for (std::size_t oy = 0; oy < o; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_before);
            if (iy < 0 || iy >= static_cast<long>(n)) continue;
            const double* row = src + (b * o + oy) * o;
            for (std::size_t ox = 0; ox < o; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad_before);
              if (ix >= 0 && ix < static_cast<long>(n)) img[iy * n + ix] += row[ox];
            }
          }
        }
      }
    }
  }
}

void conv_relu_forward(const Matrix& input, std::size_t batch,
                       const ConvGeometry& g, std::span<const double> weight,
                       std::span<const double> bias, ConvCache& cache) {
  if (weight.size() != g.out_channels * g.patch() || bias.size() != g.out_channels) {
    throw DimensionError("conv: parameter sizes do not match geometry");
  }
  cache.cols = im2col(input, batch, g);
  const std::size_t width = cache.cols.cols;
  cache.out = Matrix(g.out_channels, width);
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    auto out = cache.out.row(co);
    std::fill(out.begin(), out.end(), bias[co]);
    for (std::size_t p = 0; p < g.patch(); ++p) {
      const double w = weight[co * g.patch() + p];
      if (w == 0.0) continue;
      axpy(w, cache.cols.row(p), out);
    }
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
  }
}

void conv_relu_backward(Matrix& d_out, std::size_t batch, const ConvGeometry& g,
                        std::span<const double> weight, const ConvCache& cache,
                        std::span<double> d_weight, std::span<double> d_bias,
                        Matrix* d_input) {
  const std::size_t width = cache.cols.cols;
  if (d_out.rows != g.out_channels || d_out.cols != width) {
    throw DimensionError("conv backward: gradient shape does not match output");
  }
  for (std::size_t i = 0; i < d_out.data.size(); ++i)
    if (cache.out.data[i] <= 0.0) d_out.data[i] = 0.0;

  Matrix d_cols;
  if (d_input != nullptr) d_cols = Matrix(g.patch(), width);
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    const auto d = d_out.row(co);
    double sum = 0.0;
    for (const double v : d) sum += v;
    d_bias[co] += sum;
    for (std::size_t p = 0; p < g.patch(); ++p) {
      d_weight[co * g.patch() + p] += dot(d, cache.cols.row(p));
      if (d_input != nullptr) {
        const double w = weight[co * g.patch() + p];
        if (w != 0.0) axpy(w, d, d_cols.row(p));
      }
    }
  }
  if (d_input != nullptr) {
    *d_input = Matrix(g.in_channels, batch * g.in_size * g.in_size);
    col2im_add(d_cols, batch, g, *d_input);
  }
}

}  // namespace limi
