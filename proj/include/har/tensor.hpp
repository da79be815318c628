#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace har {

std::size_t shape_size(const std::vector<std::size_t>& shape);

// Dense row-major tensor of 64-bit reals. The sole numeric carrier in
// the toolkit; gradient buffers live on the graph, not here.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor row(std::vector<double> v);  // shape [1, n]
  static Tensor vec(std::vector<double> v);  // shape [n]
  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> data);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row_span(std::size_t r);
  std::span<const double> row_span(std::size_t r) const;

  double item() const;  // scalar tensors only
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Index of the largest entry; ties break toward the lowest index.
std::size_t argmax(std::span<const double> v);

}  // namespace har
