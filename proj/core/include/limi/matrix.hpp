#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace limi {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  bool empty() const { return data.empty(); }
  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Dot product with four independent accumulators (deterministic order).
double dot(std::span<const double> a, std::span<const double> b);

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// out[n, :] = bias + x[n, :] * w, with w stored [in, out] row-major.
void affine_forward(const Matrix& x, std::span<const double> w,
                    std::span<const double> bias, Matrix& out);

/// Accumulates dW += x^T dy, db += colsum(dy); writes dx = dy * w^T when
/// `dx` is non-null.
void affine_backward(const Matrix& x, std::span<const double> w,
                     const Matrix& dy, std::span<double> dw,
                     std::span<double> db, Matrix* dx);

Matrix transpose(const Matrix& m);

bool all_finite(std::span<const double> v);

double squared_norm(std::span<const double> v);

}  // namespace limi
