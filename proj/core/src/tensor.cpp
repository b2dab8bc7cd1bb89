#include "comkd/tensor.hpp"

#include <algorithm>
#include <unordered_set>
#include <utility>

#include "comkd/errors.hpp"

namespace comkd {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<float> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " cannot hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->data.size(), 0.0f);
  return node;
}

}  // namespace

Tensor::Tensor() : node_(make_leaf({0}, {}, false)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<float>(n, 0.0f), requires_grad));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<float>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return Tensor(make_leaf({}, {value}, requires_grad));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<float>> rows, bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<float> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix initializer");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from({r, c}, std::move(values), requires_grad);
}

Tensor Tensor::vector(std::initializer_list<float> values, bool requires_grad) {
  return from({values.size()}, std::vector<float>(values), requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return node_->shape[0];
  if (rank() <= 1) return 1;
  throw DimensionError("expected a matrix, got shape " + shape_string(shape()));
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return node_->shape[1];
  if (rank() == 1) return node_->shape[0];
  if (rank() == 0) return 1;
  throw DimensionError("expected a matrix, got shape " + shape_string(shape()));
}

std::span<float> Tensor::mutable_data() {
  if (!node_->is_leaf()) {
    throw InvariantError(std::string("cannot write into the result of '") + node_->op + "'");
  }
  return node_->data;
}

float Tensor::item() const {
  if (numel() != 1) {
    throw ParameterError("item() needs a single-element tensor, got shape " + shape_string(shape()));
  }
  return node_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  if (!node_->is_leaf()) {
    throw InvariantError("requires_grad can only be toggled on leaf tensors");
  }
  node_->requires_grad = on;
  if (on) {
    node_->grad.assign(node_->data.size(), 0.0f);
  } else {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
  }
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0f); }

Tensor Tensor::detach() const { return Tensor(make_leaf(node_->shape, node_->data, false)); }

Tensor Tensor::clone() const {
  return Tensor(make_leaf(node_->shape, node_->data, node_->requires_grad));
}

void Tensor::backward() const {
  ComputationTape tape(*this);
  tape.replay();
}

ComputationTape::ComputationTape(const Tensor& loss) : loss_(loss) {
  if (loss.numel() != 1) {
    throw ParameterError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  // Iterative post-order DFS; inputs are visited in recorded order so the
  // resulting order is deterministic.
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  if (!loss.node()->requires_grad) return;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order_.push_back(node);
    stack.pop_back();
  }
}

std::vector<ComputationTape::Entry> ComputationTape::entries() const {
  std::vector<Entry> out;
  out.reserve(order_.size());
  for (const auto* node : order_) out.push_back({node->op, node->shape, node->is_leaf()});
  return out;
}

std::size_t ComputationTape::replay() {
  if (order_.empty()) return 0;
  for (auto* node : order_) {
    if (!node->is_leaf()) std::fill(node->grad.begin(), node->grad.end(), 0.0f);
  }
  order_.back()->grad[0] += 1.0f;
  std::size_t invoked = 0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    if ((*it)->is_leaf()) continue;
    (*it)->adjoint(**it);
    ++invoked;
  }
  return invoked;
}

void sgd_step(const ParameterSet& params, float lr) {
  if (!(lr > 0.0f)) throw ParameterError("learning rate must be positive");
  for (const auto& p : params) {
    if (!p.requires_grad()) {
      throw InvariantError("sgd_step: parameter of shape " + shape_string(p.shape()) +
                           " has no gradient buffer");
    }
  }
  for (const auto& p : params) {
    auto& node = *p.node();
    for (std::size_t i = 0; i < node.data.size(); ++i) node.data[i] -= lr * node.grad[i];
    std::fill(node.grad.begin(), node.grad.end(), 0.0f);
  }
}

void zero_grads(const ParameterSet& params) {
  for (auto p : params) p.zero_grad();
}

}  // namespace comkd
