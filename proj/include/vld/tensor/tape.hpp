#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <vector>

#include "vld/tensor/parameters.hpp"
#include "vld/tensor/tensor.hpp"

namespace vld {

template <typename T>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }

  const Shape& shape() const { return tape_->shape(id_); }
  std::span<const T> value() const { return tape_->value(id_); }
  std::size_t size() const { return value().size(); }
  std::size_t cols() const { return shape().empty() ? 1 : shape().back(); }
  std::size_t rows() const { return size() / cols(); }
  T item() const { return value()[0]; }
  Tensor<T> tensor() const {
    auto v = value();
    return Tensor<T>(shape(), std::vector<T>(v.begin(), v.end()));
  }

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Records primitive operations in creation order, which is a topological
// order of the computation graph. One backward sweep walks it in reverse.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var<T> constant(Tensor<T> value) { return push("constant", value.shape(), std::move(value.storage()), false, {}); }

  Var<T> variable(Tensor<T> value) {
    return push("variable", value.shape(), std::move(value.storage()), grad_enabled_, {});
  }

  // Leaf bound to parameter storage; repeated calls return the same node.
  Var<T> parameter(const Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var<T>(this, it->second);
    Node n;
    n.op = "parameter";
    n.shape = p.value.shape();
    n.external = &p.value.storage();
    n.requires_grad = grad_enabled_;
    n.param_index = static_cast<std::int64_t>(p.index);
    nodes_.push_back(std::move(n));
    const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
    param_nodes_.emplace(&p, id);
    return Var<T>(this, id);
  }

  // Append an op output. The backward closure is kept only when some input
  // requires a gradient.
  Var<T> record(const char* op, Shape shape, std::vector<T> value, std::initializer_list<Var<T>> inputs,
                Backward backward) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
    }
    return push(op, std::move(shape), std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  Var<T> record(const char* op, Shape shape, std::vector<T> value, const std::vector<Var<T>>& inputs,
                Backward backward) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
    }
    return push(op, std::move(shape), std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Shape& shape(std::uint32_t id) const { return nodes_[id].shape; }
  std::span<const T> value(std::uint32_t id) const {
    const auto& n = nodes_[id];
    return n.external ? std::span<const T>(*n.external) : std::span<const T>(n.value);
  }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  const char* op_name(std::uint32_t id) const { return nodes_[id].op; }

  // Gradient accumulator of a node, allocated on first touch.
  std::span<T> grad(std::uint32_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(numel(n.shape), T{0});
    return n.grad;
  }
  std::span<const T> grad_view(std::uint32_t id) const { return nodes_[id].grad; }

  void backward(Var<T> loss) {
    if (!loss.valid() || &loss.tape() != this) throw ContractError("loss belongs to a different tape");
    const auto root = loss.id();
    if (numel(nodes_[root].shape) != 1) {
      throw ContractError("backward needs a scalar loss, got shape " + shape_string(nodes_[root].shape));
    }
    if (!nodes_[root].requires_grad) throw ContractError("loss does not depend on any differentiable input");
    grad(root)[0] += T{1};
    for (std::int64_t i = root; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, static_cast<std::uint32_t>(i));
    }
  }

  Tensor<T> gradient(Var<T> v) const {
    const auto& n = nodes_[v.id()];
    if (n.grad.empty()) return Tensor<T>(n.shape);
    return Tensor<T>(n.shape, n.grad);
  }

  // Add gradients that reached parameter leaves into `sink`.
  void accumulate_parameter_grads(GradientBuffer<T>& sink) const {
    for (const auto& n : nodes_) {
      if (n.param_index < 0 || n.grad.empty()) continue;
      auto dst = sink[static_cast<std::size_t>(n.param_index)];
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
    }
  }

 private:
  struct Node {
    const char* op = "";
    Shape shape;
    std::vector<T> value;
    const std::vector<T>* external = nullptr;
    std::vector<T> grad;
    bool requires_grad = false;
    std::int64_t param_index = -1;
    Backward backward;
  };

  Var<T> push(const char* op, Shape shape, std::vector<T> value, bool requires_grad, Backward backward) {
    if (numel(shape) != value.size()) {
      throw DimensionError(std::string(op) + ": shape " + shape_string(shape) + " vs " +
                           std::to_string(value.size()) + " values");
    }
    if (finite_checks_enabled()) check_finite<T>(op, value);
    Node n;
    n.op = op;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::uint32_t> param_nodes_;
  bool grad_enabled_;
};

}  // namespace vld
