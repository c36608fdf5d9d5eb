#pragma once

#include <functional>

#include "core/matrix.hpp"

namespace must {

/// Central-difference gradient of a scalar loss over a parameter matrix:
/// g_j = (L(p + h e_j) - L(p - h e_j)) / (2h), component by component.
/// The evaluation happens on a scratch copy; `params` is never mutated.
/// Used as the independent oracle against analytic backprop everywhere.
Matrix finite_diff_gradient(const std::function<double(const Matrix&)>& loss_fn,
                            const Matrix& params, double step);

}  // namespace must
