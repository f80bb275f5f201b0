#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cade/error.hpp"

namespace cade {

/// Dense row-major tensor. Network activations use (N, C, D, H, W).
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, T fill = T(0))
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

  const std::vector<int>& shape() const noexcept { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  void reshape(std::vector<int> shape) {
    require(element_count(shape) == data_.size(), "reshape: element count mismatch");
    shape_ = std::move(shape);
  }

  /// Element count of one sample along the leading axis.
  std::size_t stride0() const { return shape_.empty() ? 0 : data_.size() / std::size_t(shape_[0]); }

  static std::size_t element_count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int s : shape) {
      require(s >= 0, "tensor: negative extent");
      n *= std::size_t(s);
    }
    return n;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = U(data_[i]);
    return out;
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

std::string shape_string(const std::vector<int>& shape);

}  // namespace cade
