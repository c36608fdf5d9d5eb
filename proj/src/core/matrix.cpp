#include "core/matrix.hpp"

#include <cmath>

namespace must {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = static_cast<int64_t>(rows.size());
  cols_ = rows_ > 0 ? static_cast<int64_t>(rows.begin()->size()) : 0;
  if (rows_ <= 0 || cols_ <= 0) {
    fail(ErrorCode::invalid_argument, "matrix literal must be non-empty");
  }
  data_.reserve(static_cast<size_t>(rows_ * cols_));
  for (const auto& r : rows) {
    if (static_cast<int64_t>(r.size()) != cols_) {
      fail(ErrorCode::dimension_mismatch, "ragged matrix literal: row of ",
           r.size(), " entries, expected ", cols_);
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(int64_t n) {
  Matrix m(n, n);
  for (int64_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::filled(int64_t rows, int64_t cols, double value) {
  Matrix m(rows, cols);
  for (double& v : m.data_) v = value;
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Matrix::ensure_finite(const char* what) const {
  if (!all_finite()) {
    fail(ErrorCode::state, what, ": non-finite entry in ", rows_, "x", cols_,
         " matrix");
  }
}

Matrix Matrix::row(int64_t r) const {
  if (r < 0 || r >= rows_) {
    fail(ErrorCode::invalid_argument, "row index ", r, " out of range [0,",
         rows_, ")");
  }
  Matrix out(1, cols_);
  for (int64_t c = 0; c < cols_; ++c) out(0, c) = (*this)(r, c);
  return out;
}

Matrix Matrix::select_rows(const std::vector<int64_t>& indices) const {
  if (indices.empty()) {
    fail(ErrorCode::invalid_argument, "select_rows: empty index set");
  }
  Matrix out(static_cast<int64_t>(indices.size()), cols_);
  for (size_t i = 0; i < indices.size(); ++i) {
    int64_t r = indices[i];
    if (r < 0 || r >= rows_) {
      fail(ErrorCode::invalid_argument, "select_rows: index ", r,
           " out of range [0,", rows_, ")");
    }
    for (int64_t c = 0; c < cols_; ++c) {
      out(static_cast<int64_t>(i), c) = (*this)(r, c);
    }
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorCode::dimension_mismatch, "matmul: ", a.rows(), "x", a.cols(),
         " * ", b.rows(), "x", b.cols());
  }
  Matrix out(a.rows(), b.cols());
  for (int64_t i = 0; i < a.rows(); ++i) {
    for (int64_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int64_t j = 0; j < b.cols(); ++j) {
        out(i, j) += aik * b(k, j);
      }
    }
  }
  out.ensure_finite("matmul");
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (int64_t i = 0; i < a.rows(); ++i) {
    for (int64_t j = 0; j < a.cols(); ++j) {
      out(j, i) = a(i, j);
    }
  }
  return out;
}

}  // namespace must
