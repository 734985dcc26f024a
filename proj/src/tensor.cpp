// SPDX-License-Identifier: Apache-2.0
#include "iocf/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "iocf/error.hpp"
#include "node.hpp"

namespace iocf {

namespace {
thread_local bool g_no_grad = false;

detail::Node& checked(const std::shared_ptr<detail::Node>& n) {
  if (!n) throw UsageError("operation on an undefined tensor");
  return *n;
}
}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = iocf::numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
  if (iocf::numel(shape) != data.size()) {
    throw DimensionError("shape " + to_string(shape) + " holds " + std::to_string(iocf::numel(shape)) +
                         " values, got " + std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_data({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).value.size(); }

std::span<const double> Tensor::data() const { return checked(node_).value; }
std::span<double> Tensor::mutable_data() { return checked(node_).value; }

double Tensor::item() const {
  const auto& n = checked(node_);
  if (n.value.size() != 1) throw UsageError("item() on tensor of shape " + to_string(n.shape));
  return n.value[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  auto& n = checked(node_);
  if (n.op != nullptr && !on) throw UsageError("cannot clear requires_grad on an op output");
  n.requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return checked(node_).op == nullptr; }

std::string_view Tensor::op_name() const {
  const auto& n = checked(node_);
  return n.op ? std::string_view(n.op) : std::string_view("leaf");
}

bool Tensor::has_grad() const {
  const auto& n = checked(node_);
  return !n.grad.empty() && n.grad.size() == n.value.size();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw UsageError("tensor has no gradient; run backward first");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  auto& n = checked(node_);
  return {n.grad_buffer(), n.value.size()};
}

void Tensor::zero_grad() {
  auto& n = checked(node_);
  std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  const auto& n = checked(node_);
  return from_data(n.shape, n.value, false);
}

Graph Graph::trace(const Tensor& root) {
  Graph g;
  g.root_ = root;
  const auto& start = TensorAccess::node(root);
  checked(start);
  if (!start->requires_grad) return g;

  // Iterative post-order DFS; each node is emitted after all of its inputs.
  std::unordered_map<const detail::Node*, std::size_t> position;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  std::unordered_map<const detail::Node*, bool> seen;
  stack.emplace_back(start.get(), 0);
  seen[start.get()] = true;
  std::unordered_map<const detail::Node*, std::shared_ptr<detail::Node>> owner;
  owner[start.get()] = start;

  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const auto& in = node->inputs[next++];
      if (in->requires_grad && !seen[in.get()]) {
        seen[in.get()] = true;
        owner[in.get()] = in;
        stack.emplace_back(in.get(), 0);
      }
      continue;
    }
    Entry e;
    e.op = node->op ? std::string_view(node->op) : std::string_view("leaf");
    for (const auto& in : node->inputs) {
      if (in->requires_grad) e.inputs.push_back(position.at(in.get()));
    }
    position[node] = g.order_.size();
    g.order_.push_back(owner.at(node));
    g.entries_.push_back(std::move(e));
    stack.pop_back();
  }
  return g;
}

std::size_t Graph::op_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(order_.begin(), order_.end(), [](const auto& n) { return n->op != nullptr; }));
}

std::size_t backward(const Tensor& loss, const Graph& graph) {
  const auto& root = TensorAccess::node(loss);
  checked(root);
  if (root->value.size() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " + to_string(root->shape));
  }
  if (!root->requires_grad) throw UsageError("loss does not depend on any tensor that requires grad");
  if (graph.order_.empty() || graph.order_.back() != root) {
    throw UsageError("graph was traced from a different root");
  }

  for (const auto& n : graph.order_) {
    if (n->op) n->grad.assign(n->value.size(), 0.0);
  }
  root->grad_buffer()[0] += 1.0;

  std::size_t visited = 0;
  for (auto it = graph.order_.rbegin(); it != graph.order_.rend(); ++it) {
    detail::Node& n = **it;
    if (!n.op) continue;
    if (n.adjoint) n.adjoint(n);
    ++visited;
  }
  // Intermediate adjoints are scratch space.
  for (const auto& n : graph.order_) {
    if (n->op) std::vector<double>().swap(n->grad);
  }
  return visited;
}

std::size_t backward(const Tensor& loss) { return backward(loss, Graph::trace(loss)); }

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::enabled() noexcept { return g_no_grad; }

}  // namespace iocf
