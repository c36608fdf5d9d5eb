#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "core/error.hpp"

namespace must {

/// Dense row-major matrix of 64-bit reals. The one numeric carrier used by
/// every other module. Values are immutable once handed to a consumer that
/// shares them; all mutation happens through owned instances.
class Matrix {
 public:
  Matrix() = default;  // 0x0 placeholder; any real use requires positive dims

  Matrix(int64_t rows, int64_t cols) : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0) {
      fail(ErrorCode::invalid_argument, "matrix dims must be positive, got ",
           rows, "x", cols);
    }
    data_.assign(static_cast<size_t>(rows * cols), 0.0);
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(int64_t n);
  static Matrix filled(int64_t rows, int64_t cols, double value);

  int64_t rows() const { return rows_; }
  int64_t cols() const { return cols_; }
  int64_t size() const { return rows_ * cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(int64_t r, int64_t c) { return data_[idx(r, c)]; }
  double operator()(int64_t r, int64_t c) const { return data_[idx(r, c)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Matrix& other) const = default;  // bitwise per entry

  bool all_finite() const;
  void ensure_finite(const char* what) const;

  Matrix row(int64_t r) const;
  Matrix select_rows(const std::vector<int64_t>& indices) const;

 private:
  size_t idx(int64_t r, int64_t c) const {
    return static_cast<size_t>(r * cols_ + c);
  }

  int64_t rows_ = 0;
  int64_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

}  // namespace must
