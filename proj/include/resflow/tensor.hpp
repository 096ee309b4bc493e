#pragma once

#include <cstddef>
#include <vector>

#include "resflow/errors.hpp"

namespace resflow {

// Row-major dense matrix of doubles. Rows are samples of a mini-batch,
// columns are features/units. A scalar is a 1x1 Mat; a batch of scalars
// (losses, logits) is Nx1.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Mat from_rows(std::size_t rows, std::size_t cols,
                       std::vector<double> data) {
    if (data.size() != rows * cols)
      throw UsageError("Mat::from_rows: data size does not match shape");
    Mat m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    return m;
  }

  static Mat row(std::vector<double> data) {
    const std::size_t n = data.size();
    return from_rows(1, n, std::move(data));
  }

  static Mat column(std::vector<double> data) {
    const std::size_t n = data.size();
    return from_rows(n, 1, std::move(data));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const {
    return data_.data() + r * cols_;
  }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  bool same_shape(const Mat& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// C = A * B  (rows_a x cols_a) * (cols_a x cols_b)
inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows())
    throw UsageError("matmul: inner dimensions do not match");
  Mat c(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = a.row_ptr(i);
    double* cr = c.row_ptr(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      const double* br = b.row_ptr(p);
      for (std::size_t j = 0; j < m; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

// C = A^T * B, where A is (n x r), B is (n x c) -> (r x c). Used for
// weight gradients: dW = X^T * dY.
inline Mat matmul_at_b(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows())
    throw UsageError("matmul_at_b: row counts do not match");
  Mat c(a.cols(), b.cols());
  const std::size_t n = a.rows(), r = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = a.row_ptr(i);
    const double* br = b.row_ptr(i);
    for (std::size_t p = 0; p < r; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      double* cr = c.row_ptr(p);
      for (std::size_t j = 0; j < m; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

// C = A * B^T, where A is (n x c), B is (m x c) -> (n x m). Used for
// input gradients: dX = dY * W^T.
inline Mat matmul_a_bt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols())
    throw UsageError("matmul_a_bt: column counts do not match");
  Mat c(a.rows(), b.rows());
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = a.row_ptr(i);
    double* cr = c.row_ptr(i);
    for (std::size_t j = 0; j < m; ++j) {
      const double* br = b.row_ptr(j);
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      cr[j] = s;
    }
  }
  return c;
}

}  // namespace resflow
