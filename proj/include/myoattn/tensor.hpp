#pragma once

#include <initializer_list>
#include <vector>

#include "myoattn/common.hpp"

namespace myoattn::ad {

// Dense row-major double tensor. Value semantics; ops never mutate inputs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);
  static Tensor matrix(int rows, int cols, std::vector<double> data);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double v);

  const std::vector<int>& shape() const { return shape_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  std::size_t numel() const { return data_.size(); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  bool is_scalar() const { return numel() == 1; }

  // 2-D accessors; a 1-D tensor counts as a single row.
  int rows() const;
  int cols() const;
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::string shape_str(const Tensor& t);

}  // namespace myoattn::ad
