#include "sct/blas.hpp"
#include "sct/ops.hpp"

namespace sct {

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " x " +
                     shape_str(sb));
  std::size_t m = sa[0], k = sa[1], n = sb[1];
  std::vector<T> out(m * n);
  blas::gemm(false, false, m, n, k, T(1), a.data().data(), k, b.data().data(), n, T(0),
             out.data(), n);
  return make_op<T>("matmul", Shape{m, n}, std::move(out), {a, b},
                    [m, k, n](detail::Node<T>& self) {
                      auto& x = *self.parents[0];
                      auto& w = *self.parents[1];
                      const T* g = self.grad.data();
                      if (x.requires_grad) {
                        x.ensure_grad();
                        // dX += G * W^T : [m,n] x [n,k]
                        blas::gemm(false, true, m, k, n, T(1), g, n, w.data.data(), n,
                                   T(1), x.grad.data(), k);
                      }
                      if (w.requires_grad) {
                        w.ensure_grad();
                        // dW += X^T * G : [k,m] x [m,n]
                        blas::gemm(true, false, k, n, m, T(1), x.data.data(), k, g, n,
                                   T(1), w.grad.data(), n);
                      }
                    });
}

// x: [..., In], w: [In, Out], bias: [Out] or empty tensor for none.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.empty() || sw.size() != 2 || sx.back() != sw[0])
    throw ShapeError("linear: input " + shape_str(sx) + " vs weight " + shape_str(sw));
  bool has_bias = bias.defined();
  if (has_bias && (bias.shape().size() != 1 || bias.shape()[0] != sw[1]))
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " vs weight " +
                     shape_str(sw));
  std::size_t in = sw[0], out_f = sw[1];
  std::size_t rows = x.numel() / in;
  Shape out_shape = sx;
  out_shape.back() = out_f;

  std::vector<T> out(rows * out_f);
  blas::gemm(false, false, rows, out_f, in, T(1), x.data().data(), in, w.data().data(),
             out_f, T(0), out.data(), out_f);
  if (has_bias) {
    const T* pb = bias.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      T* row = out.data() + r * out_f;
      for (std::size_t j = 0; j < out_f; ++j) row[j] += pb[j];
    }
  }

  std::vector<Tensor<T>> parents = {x, w};
  if (has_bias) parents.push_back(bias);
  return make_op<T>("linear", out_shape, std::move(out), parents,
                    [rows, in, out_f, has_bias](detail::Node<T>& self) {
                      auto& x = *self.parents[0];
                      auto& w = *self.parents[1];
                      const T* g = self.grad.data();
                      if (x.requires_grad) {
                        x.ensure_grad();
                        blas::gemm(false, true, rows, in, out_f, T(1), g, out_f,
                                   w.data.data(), out_f, T(1), x.grad.data(), in);
                      }
                      if (w.requires_grad) {
                        w.ensure_grad();
                        blas::gemm(true, false, in, out_f, rows, T(1), x.data.data(), in,
                                   g, out_f, T(1), w.grad.data(), out_f);
                      }
                      if (has_bias && self.parents[2]->requires_grad) {
                        auto& b = *self.parents[2];
                        b.ensure_grad();
                        for (std::size_t r = 0; r < rows; ++r) {
                          const T* row = g + r * out_f;
                          for (std::size_t j = 0; j < out_f; ++j) b.grad[j] += row[j];
                        }
                      }
                    });
}

#define SCT_INSTANTIATE(T)                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

SCT_INSTANTIATE(float)
SCT_INSTANTIATE(double)
#undef SCT_INSTANTIATE

}  // namespace sct
