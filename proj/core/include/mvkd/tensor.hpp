#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvkd/error.hpp"
#include "mvkd/rng.hpp"

namespace mvkd {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct Node;

// Per-backward-pass gradient scratchpad. Gradients live here while the pass
// walks the graph and are committed to Node::grad only for leaves and nodes
// that asked to retain them, so activation gradients can be freed as soon as
// their consumers are done.
template <typename T>
class GradMap {
 public:
  std::vector<T>& get(Node<T>* node);
  std::vector<T>* find(Node<T>* node);
  void drop(Node<T>* node);

 private:
  std::unordered_map<Node<T>*, std::vector<T>> grads_;
};

template <typename T>
using BackwardFn = std::function<void(Node<T>&, const std::vector<T>&, GradMap<T>&)>;

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // persistent; filled for leaves / retain_grad nodes
  bool requires_grad = false;
  bool retain_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn<T> backward_fn;  // unset on leaves

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  bool is_leaf() const { return !backward_fn; }
};

}  // namespace detail

// Enables/disables graph recording in the current thread. While disabled,
// every op returns a constant leaf; used for teacher inference and eval.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled() noexcept;

// Dense row-major tensor handle with reverse-mode autodiff. Copying the
// handle shares the underlying node; data is never mutated after creation
// except by gradient accumulation and explicit parameter updates.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, T value);
  static Tensor scalar(T value);  // rank-0
  static Tensor from_data(const Shape& shape, std::vector<T> data);
  static Tensor uniform(const Shape& shape, double a, double b, Rng& rng);
  static Tensor normal(const Shape& shape, double mu, double sigma, Rng& rng);
  static Tensor truncated_normal(const Shape& shape, double mu, double sigma, Rng& rng);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t dim(int axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return node_->size(); }

  const std::vector<T>& data() const { return node_->data; }
  // Direct mutation is reserved for optimizers and loaders; it invalidates
  // no graph because leaves have no recorded producer.
  std::vector<T>& mutable_data() { return node_->data; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool value);
  Tensor& retain_grad();

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const std::vector<T>& grad() const { return node_->grad; }
  void zero_grad();

  // Reverse-mode pass from a scalar. Accumulates into existing gradients.
  void backward() const;

  // Constant copy cut off from the graph.
  Tensor detach() const;
  // Deep copy as a fresh leaf (keeps requires_grad).
  Tensor clone() const;

  detail::Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node<T>>& node_ptr() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node<T>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

namespace detail {

// Shared by op implementations: make a node, wire parents + backward only
// when grad mode is on and some parent needs gradients.
template <typename T>
std::shared_ptr<Node<T>> make_op_node(Shape shape, std::vector<T> data,
                                      std::vector<std::shared_ptr<Node<T>>> parents,
                                      BackwardFn<T> backward);

template <typename T>
std::shared_ptr<Node<T>> make_leaf(Shape shape, std::vector<T> data, bool requires_grad);

}  // namespace detail

}  // namespace mvkd
