#include "mvkd/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace mvkd {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
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

namespace {

thread_local int g_no_grad_depth = 0;

void check_shape(const Shape& shape) {
  for (auto extent : shape) {
    if (extent < 1) raise(ErrorKind::InvalidShape, "extent must be >= 1, got shape " + shape_str(shape));
  }
}

}  // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_enabled() noexcept { return g_no_grad_depth == 0; }

namespace detail {

template <typename T>
std::vector<T>& GradMap<T>::get(Node<T>* node) {
  auto [it, inserted] = grads_.try_emplace(node);
  if (inserted) it->second.assign(static_cast<std::size_t>(node->size()), T(0));
  return it->second;
}

template <typename T>
std::vector<T>* GradMap<T>::find(Node<T>* node) {
  auto it = grads_.find(node);
  return it == grads_.end() ? nullptr : &it->second;
}

template <typename T>
void GradMap<T>::drop(Node<T>* node) {
  grads_.erase(node);
}

template <typename T>
std::shared_ptr<Node<T>> make_leaf(Shape shape, std::vector<T> data, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

template <typename T>
std::shared_ptr<Node<T>> make_op_node(Shape shape, std::vector<T> data,
                                      std::vector<std::shared_ptr<Node<T>>> parents,
                                      BackwardFn<T> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    if (any) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward_fn = std::move(backward);
    }
  }
  return node;
}

template class GradMap<float>;
template class GradMap<double>;
template std::shared_ptr<Node<float>> make_leaf(Shape, std::vector<float>, bool);
template std::shared_ptr<Node<double>> make_leaf(Shape, std::vector<double>, bool);
template std::shared_ptr<Node<float>> make_op_node(Shape, std::vector<float>,
                                                   std::vector<std::shared_ptr<Node<float>>>,
                                                   BackwardFn<float>);
template std::shared_ptr<Node<double>> make_op_node(Shape, std::vector<double>,
                                                    std::vector<std::shared_ptr<Node<double>>>,
                                                    BackwardFn<double>);

}  // namespace detail

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape) {
  check_shape(shape);
  return from_node(detail::make_leaf<T>(shape, std::vector<T>(static_cast<std::size_t>(numel(shape)), T(0)), false));
}

template <typename T>
Tensor<T> Tensor<T>::ones(const Shape& shape) {
  return full(shape, T(1));
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value) {
  check_shape(shape);
  return from_node(detail::make_leaf<T>(shape, std::vector<T>(static_cast<std::size_t>(numel(shape)), value), false));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return from_node(detail::make_leaf<T>({}, std::vector<T>{value}, false));
}

template <typename T>
Tensor<T> Tensor<T>::from_data(const Shape& shape, std::vector<T> data) {
  check_shape(shape);
  if (numel(shape) != static_cast<std::int64_t>(data.size())) {
    raise(ErrorKind::InvalidShape,
          "data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  }
  return from_node(detail::make_leaf<T>(shape, std::move(data), false));
}

template <typename T>
Tensor<T> Tensor<T>::uniform(const Shape& shape, double a, double b, Rng& rng) {
  check_shape(shape);
  if (!(a < b)) raise(ErrorKind::InvalidParameter, "uniform requires a < b");
  std::vector<T> data(static_cast<std::size_t>(numel(shape)));
  for (auto& v : data) v = static_cast<T>(rng.uniform(a, b));
  return from_node(detail::make_leaf<T>(shape, std::move(data), false));
}

template <typename T>
Tensor<T> Tensor<T>::normal(const Shape& shape, double mu, double sigma, Rng& rng) {
  check_shape(shape);
  if (sigma < 0) raise(ErrorKind::InvalidParameter, "normal requires sigma >= 0");
  std::vector<T> data(static_cast<std::size_t>(numel(shape)));
  for (auto& v : data) v = static_cast<T>(rng.normal(mu, sigma));
  return from_node(detail::make_leaf<T>(shape, std::move(data), false));
}

template <typename T>
Tensor<T> Tensor<T>::truncated_normal(const Shape& shape, double mu, double sigma, Rng& rng) {
  check_shape(shape);
  if (sigma < 0) raise(ErrorKind::InvalidParameter, "truncated_normal requires sigma >= 0");
  std::vector<T> data(static_cast<std::size_t>(numel(shape)));
  for (auto& v : data) v = static_cast<T>(rng.truncated_normal(mu, sigma));
  return from_node(detail::make_leaf<T>(shape, std::move(data), false));
}

template <typename T>
T Tensor<T>::item() const {
  if (!node_ || node_->size() != 1) {
    raise(ErrorKind::InvalidShape, "item() requires a single-element tensor");
  }
  return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool value) {
  if (value && !node_->is_leaf()) {
    raise(ErrorKind::InvalidParameter, "requires_grad can only be toggled on leaf tensors");
  }
  node_->requires_grad = value;
  return *this;
}

template <typename T>
Tensor<T>& Tensor<T>::retain_grad() {
  node_->retain_grad = true;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_node(detail::make_leaf<T>(node_->shape, node_->data, false));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return from_node(detail::make_leaf<T>(node_->shape, node_->data, node_->requires_grad));
}

template <typename T>
void Tensor<T>::backward() const {
  using detail::Node;
  if (!node_) raise(ErrorKind::InvalidBackward, "backward on undefined tensor");
  if (node_->size() != 1) {
    raise(ErrorKind::InvalidBackward, "loss must be scalar, got shape " + shape_str(node_->shape));
  }
  if (!node_->requires_grad) return;

  // Post-order DFS, iterative to keep stack depth independent of graph size.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      Node<T>* parent = node->parents[next_child++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  detail::GradMap<T> sink;
  sink.get(node_.get())[0] = T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    std::vector<T>* grad = sink.find(node);
    if (grad == nullptr) continue;
    if (node->is_leaf() || node->retain_grad) {
      if (node->grad.empty()) node->grad.assign(static_cast<std::size_t>(node->size()), T(0));
      for (std::size_t i = 0; i < node->grad.size(); ++i) node->grad[i] += (*grad)[i];
    }
    if (node->backward_fn) node->backward_fn(*node, *grad, sink);
    sink.drop(node);
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace mvkd
