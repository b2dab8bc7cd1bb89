#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace comkd {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> data;
  // Sized like data iff requires_grad.
  std::vector<float> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> adjoint;

  bool is_leaf() const { return !adjoint; }
};

}  // namespace detail

// Dense row-major float32 array with an optional gradient buffer.
//
// Tensor is a shared handle: copies alias the same storage, so a model's
// parameter tensors can be handed to an optimizer and to the forward pass
// without duplication. Results of operations are fresh nodes that remember
// their inputs; calling backward() on a scalar result replays the recorded
// adjoints in reverse execution order.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);
  // Row-major nested initializer, mostly for tests: Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows,
                       bool requires_grad = false);
  static Tensor vector(std::initializer_list<float> values, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }
  // Rows/cols of a rank-2 tensor; rank-1 tensors are treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const float> data() const { return node_->data; }
  // Writable view of a leaf's values. Throws InvariantError on op results.
  std::span<float> mutable_data();
  float item() const;
  float at(std::size_t i) const { return node_->data[i]; }
  float at(std::size_t row, std::size_t col) const { return node_->data[row * cols() + col]; }

  bool requires_grad() const { return node_->requires_grad; }
  // Leaves only. Enabling allocates a zeroed grad buffer, disabling drops it.
  void set_requires_grad(bool on);
  bool has_grad() const { return node_->requires_grad; }
  std::span<const float> grad() const { return node_->grad; }
  void zero_grad();

  bool is_leaf() const { return node_->is_leaf(); }
  const char* op_name() const { return node_->op; }

  // New leaf with copied values and no gradient history.
  Tensor detach() const;
  // Same as detach() but keeps the requires_grad flag.
  Tensor clone() const;

  // Accumulates dself/dleaf into every requires_grad leaf reachable from this
  // scalar. Intermediate grads are reset on each call; leaf grads accumulate.
  void backward() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of the operations that produced a scalar loss, in execution
// order (inputs before outputs). Only nodes on a gradient path are recorded.
class ComputationTape {
 public:
  struct Entry {
    std::string op;
    Shape shape;
    bool leaf;
  };

  explicit ComputationTape(const Tensor& loss);

  std::size_t size() const { return order_.size(); }
  std::vector<Entry> entries() const;
  // Runs every recorded adjoint once, last-executed first. Returns the number
  // of adjoints invoked.
  std::size_t replay();

 private:
  Tensor loss_;
  std::vector<detail::Node*> order_;
};

using ParameterSet = std::vector<Tensor>;

// theta <- theta - lr * grad(theta), then clears the grads.
void sgd_step(const ParameterSet& params, float lr);
void zero_grads(const ParameterSet& params);

}  // namespace comkd
