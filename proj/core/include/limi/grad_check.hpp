#pragma once

#include <functional>
#include <span>
#include <vector>

namespace limi {

/// Scalar function with its analytic gradient: returns the value and writes
/// the gradient into the second argument (sized like the point).
using DifferentiableFn =
    std::function<double(std::span<const double>, std::span<double>)>;

/// Max over checked coordinates of |analytic - central difference| /
/// max(1, |analytic|). Non-finite values count as infinite error.
/// `coords` restricts the check to a subset; empty means all coordinates.
double grad_check(const DifferentiableFn& fn, std::span<const double> point,
                  double step, std::span<const std::size_t> coords = {});

}  // namespace limi
