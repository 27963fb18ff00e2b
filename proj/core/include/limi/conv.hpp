#pragma once

#include <cstddef>
#include <span>

#include "limi/matrix.hpp"

namespace limi {

/// Square 2-D convolution geometry. Activations are stored channel-major
/// over the whole batch: a Matrix with `channels` rows and
/// batch * size * size columns, each row laid out [b][y][x].
struct ConvGeometry {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t in_size = 1;
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t pad_before = 1;  // zero rows/columns above and left
  std::size_t pad_after = 1;   // below and right

  std::size_t out_size() const {
    return (in_size + pad_before + pad_after - kernel) / stride + 1;
  }
  std::size_t patch() const { return in_channels * kernel * kernel; }
};

/// Forward state kept for the backward pass.
struct ConvCache {
  Matrix cols;  // patch() x (batch * out_size^2)
  Matrix out;   // out_channels x (batch * out_size^2), post-relu
};

/// Unrolls input patches; out-of-bounds taps read zero.
Matrix im2col(const Matrix& input, std::size_t batch, const ConvGeometry& g);

/// Scatters column gradients back onto the input layout (accumulating).
void col2im_add(const Matrix& cols, std::size_t batch, const ConvGeometry& g,
                Matrix& d_input);

/// relu(W * cols + b). weight is [out_channels, patch()] row-major.
void conv_relu_forward(const Matrix& input, std::size_t batch,
                       const ConvGeometry& g, std::span<const double> weight,
                       std::span<const double> bias, ConvCache& cache);

/// Accumulates weight/bias gradients; writes the input gradient when
/// `d_input` is non-null. `d_out` is modified in place (relu mask).
void conv_relu_backward(Matrix& d_out, std::size_t batch, const ConvGeometry& g,
                        std::span<const double> weight, const ConvCache& cache,
                        std::span<double> d_weight, std::span<double> d_bias,
                        Matrix* d_input);

}  // namespace limi
