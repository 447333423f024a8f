// SPDX-License-Identifier: Apache-2.0
#include "modalbridge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace modalbridge {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<float>& detail::Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  return grad;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
  }
  if (shape.empty()) throw ShapeError("tensor: shape must have at least one dimension");
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value) { return from({1}, {value}); }

detail::Node& Tensor::checked() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked().data.size(); }
std::span<const float> Tensor::data() const { return checked().data; }

std::span<float> Tensor::mutable_data() {
  detail::Node& n = checked();
  if (!n.is_leaf()) throw GradError(std::string("tensor: in-place write into output of ") + n.op);
  return n.data;
}

float Tensor::item() const {
  const detail::Node& n = checked();
  if (n.data.size() != 1) {
    throw ShapeError("tensor: item() on non-scalar " + shape_str(n.shape));
  }
  return n.data[0];
}

bool Tensor::requires_grad() const { return checked().requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  detail::Node& n = checked();
  if (!n.is_leaf()) throw GradError("tensor: requires_grad can only be set on leaves");
  n.requires_grad = flag;
}

bool Tensor::has_grad() const { return !checked().grad.empty(); }

std::span<const float> Tensor::grad() const {
  const detail::Node& n = checked();
  if (n.grad.empty()) throw GradError("tensor: grad not populated");
  return n.grad;
}

std::span<float> Tensor::mutable_grad() { return checked().ensure_grad(); }

void Tensor::zero_grad() {
  detail::Node& n = checked();
  std::fill(n.grad.begin(), n.grad.end(), 0.0f);
}

const char* Tensor::op_name() const { return checked().op; }
bool Tensor::is_leaf() const { return checked().is_leaf(); }

bool Tensor::all_finite() const {
  const auto& d = checked().data;
  return std::all_of(d.begin(), d.end(), [](float v) { return std::isfinite(v); });
}

Tensor Tensor::detach() const {
  const detail::Node& n = checked();
  return from(n.shape, n.data, false);
}

Tensor Tensor::clone() const {
  const detail::Node& n = checked();
  return from(n.shape, n.data, n.requires_grad);
}

Tensor Tensor::make_result(Shape shape, std::vector<float> values, const char* op,
                           std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->op = op;
#ifndef NDEBUG
  for (float v : node->data) {
    if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite value produced by ") + op);
  }
#endif
  const bool track =
      g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
        return t.defined() && t.requires_grad();
      });
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& t : inputs) node->parents.push_back(t.node_);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  detail::Node& root = checked();
  if (root.shape != Shape{1}) {
    throw GradError("backward: loss must have shape [1], got " + shape_str(root.shape));
  }
  if (!root.requires_grad) throw GradError("backward: loss is not connected to any parameter");

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{&root, 0}};
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0f);
  }
  root.ensure_grad()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->is_leaf()) n->backward_fn(*n);
  }
}

}  // namespace modalbridge
