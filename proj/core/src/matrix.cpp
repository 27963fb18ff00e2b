#include "limi/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "limi/error.hpp"

namespace limi {

void Matrix::fill(double v) { std::fill(data.begin(), data.end(), v); }

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = x.size();
  const double* xp = x.data();
  double* yp = y.data();
  for (std::size_t i = 0; i < n; ++i) yp[i] += alpha * xp[i];
}

void affine_forward(const Matrix& x, std::span<const double> w,
                    std::span<const double> bias, Matrix& out) {
  const std::size_t in = x.cols;
  const std::size_t width = bias.size();
  if (w.size() != in * width) {
    throw DimensionError("affine_forward: weight size does not match in*out");
  }
  out = Matrix(x.rows, width);
  for (std::size_t n = 0; n < x.rows; ++n) {
    auto o = out.row(n);
    std::copy(bias.begin(), bias.end(), o.begin());
    const auto xr = x.row(n);
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      if (xv == 0.0) continue;
      axpy(xv, w.subspan(k * width, width), o);
    }
  }
}

void affine_backward(const Matrix& x, std::span<const double> w,
                     const Matrix& dy, std::span<double> dw,
                     std::span<double> db, Matrix* dx) {
  const std::size_t in = x.cols;
  const std::size_t width = dy.cols;
  for (std::size_t n = 0; n < x.rows; ++n) {
    const auto g = dy.row(n);
    axpy(1.0, g, db);
    const auto xr = x.row(n);
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      if (xv == 0.0) continue;
      axpy(xv, g, dw.subspan(k * width, width));
    }
  }
  if (dx != nullptr) {
    *dx = Matrix(x.rows, in);
    for (std::size_t n = 0; n < x.rows; ++n) {
      const auto g = dy.row(n);
      auto d = dx->row(n);
      for (std::size_t k = 0; k < in; ++k) {
        d[k] = dot(w.subspan(k * width, width), g);
      }
    }
  }
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) t(c, r) = m(r, c);
  return t;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double squared_norm(std::span<const double> v) { return dot(v, v); }

}  // namespace limi
