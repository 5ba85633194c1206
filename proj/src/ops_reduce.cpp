#include <cmath>

#include "sct/ops.hpp"

namespace sct {

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0;
  for (T v : x.data()) acc += v;
  return make_op<T>("sum", Shape{}, {static_cast<T>(acc)}, {x},
                    [](detail::Node<T>& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      p.ensure_grad();
                      T g = self.grad[0];
                      for (auto& v : p.grad) v += g;
                    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  double acc = 0;
  for (T v : x.data()) acc += v;
  std::size_t n = x.numel();
  return make_op<T>("mean", Shape{}, {static_cast<T>(acc / static_cast<double>(n))}, {x},
                    [n](detail::Node<T>& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      p.ensure_grad();
                      T g = self.grad[0] / static_cast<T>(n);
                      for (auto& v : p.grad) v += g;
                    });
}

// mean(|a - b|); the subgradient at a == b is taken as 0.
template <class T>
Tensor<T> l1_mean(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("l1_mean: shape mismatch, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::size_t n = a.numel();
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(pa[i]) - pb[i]);
  return make_op<T>("l1_mean", Shape{}, {static_cast<T>(acc / static_cast<double>(n))},
                    {a, b}, [n](detail::Node<T>& self) {
                      auto& an = *self.parents[0];
                      auto& bn = *self.parents[1];
                      if (an.requires_grad) an.ensure_grad();
                      if (bn.requires_grad) bn.ensure_grad();
                      T g = self.grad[0] / static_cast<T>(n);
                      const T* pa = an.data.data();
                      const T* pb = bn.data.data();
                      for (std::size_t i = 0; i < n; ++i) {
                        T d = pa[i] - pb[i];
                        T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
                        if (an.requires_grad) an.grad[i] += s;
                        if (bn.requires_grad) bn.grad[i] -= s;
                      }
                    });
}

#define SCT_INSTANTIATE(T)                                       \
  template Tensor<T> sum(const Tensor<T>&);                      \
  template Tensor<T> mean(const Tensor<T>&);                     \
  template Tensor<T> l1_mean(const Tensor<T>&, const Tensor<T>&);

SCT_INSTANTIATE(float)
SCT_INSTANTIATE(double)
#undef SCT_INSTANTIATE

}  // namespace sct
