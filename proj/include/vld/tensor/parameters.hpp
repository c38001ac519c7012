#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vld/tensor/tensor.hpp"

namespace vld {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::size_t index = 0;  // position in the owning ParameterSet
};

// Named, ordered collection of learned tensors. Element addresses are stable
// across add() so tapes can reference parameter storage directly.
template <typename T>
class ParameterSet {
 public:
  Parameter<T>& add(std::string name, Tensor<T> value) {
    if (by_name_.count(name)) throw ConfigError("parameter '" + name + "' registered twice");
    const std::size_t index = params_.size();
    by_name_.emplace(name, index);
    params_.push_back(Parameter<T>{std::move(name), std::move(value), index});
    return params_.back();
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  const Parameter<T>* find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    return it == by_name_.end() ? nullptr : &params_[it->second];
  }
  Parameter<T>* find(std::string_view name) {
    auto it = by_name_.find(std::string(name));
    return it == by_name_.end() ? nullptr : &params_[it->second];
  }
  const Parameter<T>& at(std::string_view name) const {
    const auto* p = find(name);
    if (!p) throw ConfigError("unknown parameter '" + std::string(name) + "'");
    return *p;
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
    return out;
  }

  // Overwrite values from a set with identical names and shapes.
  template <typename U>
  void assign_from(const ParameterSet<U>& other) {
    if (other.size() != size()) {
      throw SchemaError("parameter count mismatch: " + std::to_string(other.size()) + " vs " +
                        std::to_string(size()));
    }
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& src = other[i];
      auto& dst = params_[i];
      if (src.name != dst.name || src.value.shape() != dst.value.shape()) {
        throw SchemaError("parameter '" + src.name + "' " + shape_string(src.value.shape()) +
                          " does not match '" + dst.name + "' " + shape_string(dst.value.shape()));
      }
      auto s = src.value.data();
      auto d = dst.value.data();
      for (std::size_t k = 0; k < s.size(); ++k) d[k] = static_cast<T>(s[k]);
    }
  }

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

// Per-parameter gradient accumulators aligned with a ParameterSet.
template <typename T>
class GradientBuffer {
 public:
  GradientBuffer() = default;
  explicit GradientBuffer(const ParameterSet<T>& params) {
    grads_.reserve(params.size());
    for (const auto& p : params) grads_.emplace_back(p.value.size(), T{0});
  }

  std::size_t size() const noexcept { return grads_.size(); }
  std::span<T> operator[](std::size_t i) { return grads_[i]; }
  std::span<const T> operator[](std::size_t i) const { return grads_[i]; }

  void zero() {
    for (auto& g : grads_) std::fill(g.begin(), g.end(), T{0});
  }

  void add(const GradientBuffer& other) {
    for (std::size_t i = 0; i < grads_.size(); ++i) {
      for (std::size_t k = 0; k < grads_[i].size(); ++k) grads_[i][k] += other.grads_[i][k];
    }
  }

  void scale(double factor) {
    for (auto& g : grads_) {
      for (auto& x : g) x = static_cast<T>(x * factor);
    }
  }

  double l2_norm() const {
    double sq = 0.0;
    for (const auto& g : grads_) {
      for (auto x : g) sq += static_cast<double>(x) * static_cast<double>(x);
    }
    return std::sqrt(sq);
  }

 private:
  std::vector<std::vector<T>> grads_;
};

}  // namespace vld
