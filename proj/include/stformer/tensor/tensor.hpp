#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "stformer/core/error.hpp"
#include "stformer/core/ndarray.hpp"

namespace stf {

template <typename T>
struct TensorNode {
  Shape dims;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  bool leaf = true;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T{});
  }
};

/// Shared handle onto a dense row-major buffer. Copies of a Tensor alias the
/// same node (as in most autograd libraries); use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  Tensor() = default;

  explicit Tensor(Shape dims, T fill = T{}) : node_(std::make_shared<Node>()) {
    node_->data.assign(shape_numel(dims), fill);
    node_->dims = std::move(dims);
  }

  Tensor(Shape dims, std::vector<T> values) : node_(std::make_shared<Node>()) {
    if (values.size() != shape_numel(dims)) {
      throw ShapeError("Tensor: " + std::to_string(values.size()) + " values for dims " +
                       shape_str(dims));
    }
    node_->dims = std::move(dims);
    node_->data = std::move(values);
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }
  static Tensor from_array(NdArray<T> a) { return Tensor(std::move(a.dims), std::move(a.data)); }
  NdArray<T> to_array() const { return NdArray<T>(dims(), node_->data); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& dims() const { return node_->dims; }
  std::size_t rank() const { return node_->dims.size(); }
  std::size_t dim(std::size_t i) const { return node_->dims.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> values() const { return node_->data; }
  /// Direct write access. Only meaningful on leaves (initialisation, optimiser steps);
  /// mutating a value that a recorded op captured invalidates its gradient.
  std::span<T> mutable_values() { return node_->data; }
  const T& operator[](std::size_t i) const { return node_->data[i]; }

  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor with dims " + shape_str(dims()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    if (!node_->leaf) throw ContractError("set_requires_grad on a non-leaf tensor");
    node_->requires_grad = on;
    return *this;
  }
  bool is_leaf() const { return node_->leaf; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  Tensor clone() const {
    Tensor out(dims(), node_->data);
    return out;
  }
  /// Fresh leaf with the same values, outside any tape.
  Tensor detach() const { return clone(); }

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node> node_;
};

}  // namespace stf
