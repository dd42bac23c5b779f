#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "emoshare/errors.hpp"

namespace emoshare {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

// Dense N x L x D tensor stored sample-major; each sample is an L x D
// row-major matrix view.
template <typename T>
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int n, int l, int d) : n_(n), l_(l), d_(d), data_(static_cast<std::size_t>(n) * l * d, T(0)) {
    if (n < 0 || l < 0 || d < 0) throw ShapeError("negative tensor dimension");
  }

  int n() const { return n_; }
  int l() const { return l_; }
  int d() const { return d_; }

  Eigen::Map<RowMatrix<T>> sample(int i) { return {data_.data() + offset(i), l_, d_}; }
  Eigen::Map<const RowMatrix<T>> sample(int i) const { return {data_.data() + offset(i), l_, d_}; }

  T& operator()(int i, int t, int k) { return data_[offset(i) + static_cast<std::size_t>(t) * d_ + k]; }
  T operator()(int i, int t, int k) const { return data_[offset(i) + static_cast<std::size_t>(t) * d_ + k]; }

  const std::vector<T>& raw() const { return data_; }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t offset(int i) const { return static_cast<std::size_t>(i) * l_ * d_; }

  int n_ = 0, l_ = 0, d_ = 0;
  std::vector<T> data_;
};

}  // namespace emoshare
