#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vld/tensor/errors.hpp"

namespace vld {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Runtime switch for NaN/Inf detection at op boundaries. Defaults to on in
// builds without NDEBUG.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

template <typename T>
void check_finite(const char* where, std::span<const T> values);

// Dense row-major value. Rank 0 is a scalar holding one element.
template <typename T>
class Tensor {
 public:
  Tensor() : data_(1, T{0}) {}
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  // Product of all leading dimensions; the last axis is the "row".
  std::size_t rows() const noexcept { return shape_.empty() ? 1 : data_.size() / shape_.back(); }
  std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace vld
