// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major f64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a node of the differentiation graph. Ops
// (see ops.hpp) produce new nodes that remember their inputs whenever any
// input requires a gradient; `backward` walks that record in reverse
// topological order. The graph is rebuilt on every forward pass.

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace iocf {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  /// Null handle; `defined()` is false.
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  /// Rank-0 tensor holding one value.
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view of the values. Only meaningful on leaves (parameters,
  /// inputs); mutating an op output after it fed other ops corrupts their
  /// adjoints.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;
  /// Name of the producing op, or "leaf".
  std::string_view op_name() const;

  bool has_grad() const;
  /// Accumulated gradient; throws UsageError when none has been computed.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Copy of the values with no graph history.
  Tensor detach() const;

  /// Identity of the underlying node.
  const detail::Node* id() const noexcept { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend class Graph;
  friend struct TensorAccess;
};

/// Topologically ordered record of the ops reachable from a root tensor.
/// Only nodes that require gradients participate.
class Graph {
 public:
  struct Entry {
    std::string_view op;               // "leaf" for inputs/parameters
    std::vector<std::size_t> inputs;   // positions within the ordering
  };

  static Graph trace(const Tensor& root);

  /// Every entry's inputs precede it.
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t op_count() const noexcept;
  const Tensor& root() const noexcept { return root_; }

 private:
  Tensor root_;
  std::vector<std::shared_ptr<detail::Node>> order_;
  std::vector<Entry> entries_;

  friend std::size_t backward(const Tensor& loss, const Graph& graph);
};

/// Propagates d(loss)/d(node) to every requires-grad leaf reachable from
/// `loss`. Leaf gradients accumulate across calls until `zero_grad`.
/// Returns the number of op adjoints executed (each op exactly once).
std::size_t backward(const Tensor& loss, const Graph& graph);
std::size_t backward(const Tensor& loss);

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool enabled() noexcept;

 private:
  bool previous_;
};

}  // namespace iocf
