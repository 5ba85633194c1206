#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sct/errors.hpp"

namespace sct {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

// One vertex of the reverse-mode tape. `backward_fn` reads this node's grad
// and accumulates adjoints into the parents' grads.
template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

// Dense row-major n-d array with optional gradient tracking. The handle has
// shared-buffer value semantics: copies alias the same node, and no operation
// mutates an existing node's data (the Adam update on leaf parameters is the
// one documented exception).
template <class T>
class Tensor {
 public:
  using NodeT = detail::Node<T>;

  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, T value, bool requires_grad = false);
  static Tensor from_data(Shape s, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  std::size_t rank() const { return n_->shape.size(); }
  std::size_t numel() const { return n_->data.size(); }
  std::size_t dim(std::size_t i) const { return n_->shape[i]; }

  std::vector<T>& data() { return n_->data; }
  const std::vector<T>& data() const { return n_->data; }
  const std::vector<T>& grad() const;
  bool has_grad() const { return n_ && !n_->grad.empty(); }
  bool requires_grad() const { return n_->requires_grad; }
  bool is_leaf() const { return n_->leaf; }
  const char* op() const { return n_->op; }

  void zero_grad() {
    if (n_) n_->grad.clear();
  }

  T item() const;

  // Reverse sweep from a scalar. Gradients accumulate into leaf tensors;
  // the caller zeroes them between optimizer steps.
  void backward() const;

  std::shared_ptr<NodeT> node() const { return n_; }
  static Tensor wrap(std::shared_ptr<NodeT> n) {
    Tensor t;
    t.n_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<NodeT> n_;
};

// Builds a non-leaf node. Parents and the backward closure are only retained
// when some parent requires a gradient, so inference graphs stay flat.
template <class T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> data,
                  std::vector<Tensor<T>> parents,
                  std::function<void(detail::Node<T>&)> backward_fn);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace sct
