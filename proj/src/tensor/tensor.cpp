#include "vld/tensor/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace vld {

namespace {
#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif
}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled, std::memory_order_relaxed); }
bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

template <typename T>
void check_finite(const char* where, std::span<const T> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream msg;
      msg << "produced by '" << where << "' at flat index " << i << " (value " << values[i] << ")";
      throw NonFiniteError(msg.str());
    }
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)), data_(numel(shape_), T{0}) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  if (numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " needs " + std::to_string(numel(shape_)) +
                         " values, got " + std::to_string(data_.size()));
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void check_finite<float>(const char*, std::span<const float>);
template void check_finite<double>(const char*, std::span<const double>);

}  // namespace vld
