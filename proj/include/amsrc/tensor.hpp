#pragma once

#include <Eigen/Core>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "amsrc/errors.hpp"

namespace amsrc {

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major tensor shape. Dimensions are strictly positive.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<int> dims) : dims_(std::move(dims)) { validate(); }

  int rank() const { return static_cast<int>(dims_.size()); }
  int operator[](int i) const { return dims_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& dims() const { return dims_; }

  long numel() const {
    long n = 1;
    for (int d : dims_) n *= d;
    return n;
  }

  bool operator==(const Shape& o) const { return dims_ == o.dims_; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    if (dims_.empty()) return "[]";
    std::string s;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(dims_[i]);
    }
    return s;
  }

 private:
  void validate() const {
    for (int d : dims_)
      if (d <= 0) throw InvalidInput("shape dimension must be positive, got " + str());
  }

  std::vector<int> dims_;
};

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeMismatch(std::string(op) + ": " + a.str() + " vs " + b.str());
}

namespace detail {
inline thread_local int no_grad_depth = 0;
}

/// Gradient tracking is enabled by default; scoped off during inference.
inline bool grad_enabled() { return detail::no_grad_depth == 0; }

class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename Scalar>
class Tensor;

// Graph node. Value is immutable after construction (the trainer mutates
// parameter values in place between steps); grad is accumulated during
// backward and lazily allocated.
template <typename Scalar>
struct TensorNode {
  Shape shape;
  ArrayX<Scalar> value;
  ArrayX<Scalar> grad;  // size 0 until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void accumulate(const ArrayX<Scalar>& g) {
    if (grad.size() == 0) grad = ArrayX<Scalar>::Zero(value.size());
    grad += g;
  }
  template <typename Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) grad = ArrayX<Scalar>::Zero(value.size());
    grad += g;
  }
};

/// Shared handle to a graph node; cheap to copy, value semantics at the API
/// surface. All math lives in free functions (ops.hpp).
template <typename Scalar>
class Tensor {
 public:
  using Node = TensorNode<Scalar>;

  Tensor() = default;

  static Tensor leaf(Shape shape, ArrayX<Scalar> value, bool requires_grad = false) {
    if (value.size() != shape.numel())
      throw ShapeMismatch("tensor data length " + std::to_string(value.size()) +
                          " does not match shape " + shape.str());
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(const Shape& shape, bool requires_grad = false) {
    return leaf(shape, ArrayX<Scalar>::Zero(shape.numel()), requires_grad);
  }

  static Tensor full(const Shape& shape, Scalar v) {
    return leaf(shape, ArrayX<Scalar>::Constant(shape.numel(), v));
  }

  static Tensor scalar(Scalar v) { return full(Shape{1}, v); }

  static Tensor from_vector(const Shape& shape, const std::vector<Scalar>& data) {
    ArrayX<Scalar> a(static_cast<long>(data.size()));
    for (long i = 0; i < a.size(); ++i) a[i] = data[static_cast<std::size_t>(i)];
    return leaf(shape, std::move(a));
  }

  // Op-node factory. Gradient tracking is dropped when disabled or when no
  // parent requires it, so inference builds no graph.
  static Tensor op(Shape shape, ArrayX<Scalar> value, const std::vector<Tensor>& parents,
                   std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool track = grad_enabled();
    if (track) {
      bool any = false;
      for (const auto& p : parents) any = any || p.requires_grad();
      track = any;
    }
    if (track) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (const auto& p : parents) n->parents.push_back(p.node_);
      n->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  long numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  const ArrayX<Scalar>& value() const { return node_->value; }
  ArrayX<Scalar>& mutable_value() { return node_->value; }

  bool has_grad() const { return node_->grad.size() > 0; }
  const ArrayX<Scalar>& grad() const { return node_->grad; }
  ArrayX<Scalar>& mutable_grad() { return node_->grad; }

  void zero_grad() {
    if (node_->grad.size() == 0)
      node_->grad = ArrayX<Scalar>::Zero(node_->value.size());
    else
      node_->grad.setZero();
  }

  Scalar item() const {
    if (numel() != 1) throw InvalidInput("item() on non-scalar tensor of shape " + shape().str());
    return node_->value[0];
  }

  /// Reverse-mode sweep from a scalar output. Accumulates into the grads of
  /// every reachable tensor that requires gradients.
  void backward() const {
    if (numel() != 1) throw InvalidInput("backward() requires a scalar, got shape " + shape().str());
    if (!node_->requires_grad) return;

    // Iterative post-order DFS; reverse post-order is a topological order of
    // the consumer->producer DAG, so each node fires after all its consumers.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        Node* p = n->parents[idx].get();
        ++idx;
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }

    node_->accumulate(ArrayX<Scalar>::Ones(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn && n->grad.size() > 0) n->backward_fn(*n);
    }
  }

  std::shared_ptr<Node> node_;

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
};

}  // namespace amsrc
