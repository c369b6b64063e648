#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "dts/error.hpp"

namespace dts::nn {

/// Dense row-major tensor of up to five axes: (batch, channel, spatial...).
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, T fill = T{}) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 5) fail(ErrorKind::invalid_argument, "tensor rank must be 1..5");
    data_.assign(numel(shape_), fill);
  }
  Tensor(std::vector<std::size_t> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty() || shape_.size() > 5) fail(ErrorKind::invalid_argument, "tensor rank must be 1..5");
    if (data_.size() != numel(shape_)) fail(ErrorKind::invalid_argument, "tensor data does not match shape");
  }

  static std::size_t numel(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t dim(std::size_t a) const { return shape_.at(a); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }
  T& operator[](std::size_t n) { return data_[n]; }
  const T& operator[](std::size_t n) const { return data_[n]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace dts::nn
