#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace phenom {

// Minimal row-major matrix. Value semantics, no expression templates; all
// heavy math goes through the kernels so serial/parallel behavior is uniform.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T* row(int i) { return data_.data() + static_cast<size_t>(i) * cols_; }
  const T* row(int i) const { return data_.data() + static_cast<size_t>(i) * cols_; }

  T& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
  const T& operator()(int i, int j) const {
    return data_[static_cast<size_t>(i) * cols_ + j];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

}  // namespace phenom
