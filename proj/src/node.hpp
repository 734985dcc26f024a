// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "iocf/tensor.hpp"

namespace iocf {
namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  const char* op = nullptr;  // nullptr for leaves
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs that require grad.
  std::function<void(Node&)> adjoint;

  double* grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

}  // namespace detail

struct TensorAccess {
  static const std::shared_ptr<detail::Node>& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n) { return Tensor(std::move(n)); }
};

}  // namespace iocf
