#include "core/numeric_grad.hpp"

#include <cmath>

namespace must {

Matrix finite_diff_gradient(const std::function<double(const Matrix&)>& loss_fn,
                            const Matrix& params, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) {
    fail(ErrorCode::invalid_argument, "finite_diff_gradient: step must be > 0");
  }
  Matrix grad(params.rows(), params.cols());
  Matrix scratch = params;
  auto probe = params.data();
  auto work = scratch.data();
  auto out = grad.data();
  for (size_t j = 0; j < work.size(); ++j) {
    const double original = probe[j];
    work[j] = original + step;
    const double plus = loss_fn(scratch);
    work[j] = original - step;
    const double minus = loss_fn(scratch);
    work[j] = original;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      fail(ErrorCode::state, "finite_diff_gradient: non-finite loss at component ",
           j, " (f+ = ", plus, ", f- = ", minus, ")");
    }
    out[j] = (plus - minus) / (2.0 * step);
  }
  return grad;
}

}  // namespace must
