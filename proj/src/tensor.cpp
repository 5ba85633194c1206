#include "sct/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace sct {

std::size_t numel_of(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape s, bool requires_grad) {
  std::size_t n = numel_of(s);
  return from_data(std::move(s), std::vector<T>(n, T(0)), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape s, T value, bool requires_grad) {
  std::size_t n = numel_of(s);
  return from_data(std::move(s), std::vector<T>(n, value), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::from_data(Shape s, std::vector<T> values, bool requires_grad) {
  if (numel_of(s) != values.size())
    throw ShapeError("tensor data size " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(s));
  for (std::size_t d : s)
    if (d == 0) throw ShapeError("zero extent in shape " + shape_str(s));
  auto n = std::make_shared<NodeT>();
  n->shape = std::move(s);
  n->data = std::move(values);
  n->requires_grad = requires_grad;
  n->leaf = true;
  return wrap(std::move(n));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data(Shape{}, std::vector<T>{value}, requires_grad);
}

template <class T>
const std::vector<T>& Tensor<T>::grad() const {
  static const std::vector<T> empty;
  return n_ && !n_->grad.empty() ? n_->grad : empty;
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1)
    throw ContractError("item() called on non-scalar tensor " + shape_str(shape()));
  return n_->data[0];
}

template <class T>
void Tensor<T>::backward() const {
  if (!n_) throw ContractError("backward() on undefined tensor");
  if (numel() != 1)
    throw ContractError("backward() requires a scalar loss, got " + shape_str(shape()));
  if (!n_->requires_grad) return;

  // Iterative post-order DFS: children appear after all their parents, so the
  // reversed list is a valid reverse-topological sweep order.
  using NodeT = detail::Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  struct Frame {
    NodeT* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack{{n_.get(), 0}};
  seen.insert(n_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      NodeT* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  n_->ensure_grad();
  n_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (node->backward_fn) {
      if (!node->grad.empty()) node->backward_fn(*node);
      node->backward_fn = nullptr;  // releases saved state early
    }
    if (!node->leaf) node->grad = std::vector<T>();  // consumers already ran
  }
}

template <class T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> data,
                  std::vector<Tensor<T>> parents,
                  std::function<void(detail::Node<T>&)> backward_fn) {
  bool track = false;
  for (const auto& p : parents) track = track || p.requires_grad();
  auto out = Tensor<T>::from_data(std::move(shape), std::move(data), false);
  auto n = out.node();
  n->op = op;
  n->leaf = false;
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_op<float>(const char*, Shape, std::vector<float>,
                                      std::vector<Tensor<float>>,
                                      std::function<void(detail::Node<float>&)>);
template Tensor<double> make_op<double>(const char*, Shape, std::vector<double>,
                                        std::vector<Tensor<double>>,
                                        std::function<void(detail::Node<double>&)>);

}  // namespace sct
