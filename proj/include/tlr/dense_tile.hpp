#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "tlr/errors.hpp"
#include "tlr/util.hpp"

namespace tlr {

/// Column-major dense tile of 64-bit reals.
class DenseTile {
 public:
  DenseTile() = default;
  DenseTile(int rows, int cols)
      : rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(rows) * cols, 0.0) {
    if (rows < 0 || cols < 0) throw DimensionError("negative tile extent");
  }

  static DenseTile identity(int n) {
    DenseTile t(n, n);
    for (int i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  static DenseTile gaussian(int rows, int cols, Rng& rng) {
    DenseTile t(rows, cols);
    for (double& v : t.data_) v = rng.gaussian();
    return t;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int i, int j) {
    return data_[static_cast<std::size_t>(j) * rows_ + i];
  }
  double operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(j) * rows_ + i];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* col(int j) { return data_.data() + static_cast<std::size_t>(j) * rows_; }
  const double* col(int j) const {
    return data_.data() + static_cast<std::size_t>(j) * rows_;
  }

  DenseTile transposed() const {
    DenseTile t(cols_, rows_);
    for (int j = 0; j < cols_; ++j)
      for (int i = 0; i < rows_; ++i) t(j, i) = (*this)(i, j);
    return t;
  }

  // Columns [c0, c1) as a copy.
  DenseTile columns(int c0, int c1) const {
    DenseTile t(rows_, c1 - c0);
    for (int j = c0; j < c1; ++j)
      for (int i = 0; i < rows_; ++i) t(i, j - c0) = (*this)(i, j);
    return t;
  }

  void append_columns(const DenseTile& other) {
    if (empty()) {
      *this = other;
      return;
    }
    if (other.rows_ != rows_) throw DimensionError("append_columns: row mismatch");
    data_.insert(data_.end(), other.data_.begin(), other.data_.end());
    cols_ += other.cols_;
  }

  void add(const DenseTile& other, double scale = 1.0) {
    if (other.rows_ != rows_ || other.cols_ != cols_)
      throw DimensionError("add: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
  }

  void scale(double s) {
    for (double& v : data_) v *= s;
  }

  void add_diagonal(double s) {
    int m = rows_ < cols_ ? rows_ : cols_;
    for (int i = 0; i < m; ++i) (*this)(i, i) += s;
  }

  double frob() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double max_abs_diff(const DenseTile& other) const {
    double m = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i)
      m = std::max(m, std::fabs(data_[i] - other.data_[i]));
    return m;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

}  // namespace tlr
