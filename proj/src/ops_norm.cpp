#include <cmath>
#include <memory>

#include "sct/ops.hpp"

namespace sct {

namespace {

constexpr double kNormEps = 1e-5;

template <class T>
void group_stats(const T* src, std::size_t n, T& mu_out, T& rstd_out) {
  double mu = 0;
  for (std::size_t i = 0; i < n; ++i) mu += src[i];
  mu /= static_cast<double>(n);
  double var = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = src[i] - mu;
    var += d * d;
  }
  var /= static_cast<double>(n);
  mu_out = static_cast<T>(mu);
  rstd_out = static_cast<T>(1.0 / std::sqrt(var + kNormEps));
}

}  // namespace

// Per-(batch,channel) normalization over the spatial plane of [B,C,H,W];
// gamma/beta are one scalar per channel.
template <class T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  const Shape& s = x.shape();
  if (s.size() != 4)
    throw ShapeError("instance_norm: expected [B,C,H,W], got " + shape_str(s));
  std::size_t B = s[0], C = s[1], n = s[2] * s[3];
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
    throw ShapeError("instance_norm: affine params must have shape [" +
                     std::to_string(C) + "]");
  if (n < 2) throw ShapeError("instance_norm: spatial plane must have at least 2 cells");

  std::size_t rows = B * C;
  auto mean_v = std::make_shared<std::vector<T>>(rows);
  auto rstd_v = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(x.numel());
  const T* in = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = in + r * n;
    T mu, rstd;
    group_stats(src, n, mu, rstd);
    (*mean_v)[r] = mu;
    (*rstd_v)[r] = rstd;
    T g = gamma.data()[r % C], b = beta.data()[r % C];
    T* dst = out.data() + r * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = g * (src[i] - mu) * rstd + b;
  }

  return make_op<T>(
      "instance_norm", s, std::move(out), {x, gamma, beta},
      [rows, n, C, mean_v, rstd_v](detail::Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        const T* g = self.grad.data();
        if (xn.requires_grad) xn.ensure_grad();
        if (gn.requires_grad) gn.ensure_grad();
        if (bn.requires_grad) bn.ensure_grad();
        T inv_n = T(1) / static_cast<T>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* go = g + r * n;
          const T* src = xn.data.data() + r * n;
          T mu = (*mean_v)[r], rstd = (*rstd_v)[r];
          T gam = gn.data[r % C];
          if (gn.requires_grad || bn.requires_grad) {
            T dg = 0, db = 0;
            for (std::size_t i = 0; i < n; ++i) {
              dg += go[i] * (src[i] - mu) * rstd;
              db += go[i];
            }
            if (gn.requires_grad) gn.grad[r % C] += dg;
            if (bn.requires_grad) bn.grad[r % C] += db;
          }
          if (xn.requires_grad) {
            // dx = rstd*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
            T s1 = 0, s2 = 0;
            for (std::size_t i = 0; i < n; ++i) {
              T xhat = (src[i] - mu) * rstd;
              T dxh = go[i] * gam;
              s1 += dxh;
              s2 += dxh * xhat;
            }
            s1 *= inv_n;
            s2 *= inv_n;
            T* gx = xn.grad.data() + r * n;
            for (std::size_t i = 0; i < n; ++i) {
              T xhat = (src[i] - mu) * rstd;
              gx[i] += rstd * (go[i] * gam - s1 - xhat * s2);
            }
          }
        }
      });
}

// Per-row normalization over the last axis; gamma/beta act element-wise
// within each row.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("layer_norm: scalar input");
  std::size_t n = s.back();
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n})
    throw ShapeError("layer_norm: affine params must have shape [" + std::to_string(n) +
                     "]");
  if (n < 2) throw ShapeError("layer_norm: normalized axis must have at least 2 elements");

  std::size_t rows = x.numel() / n;
  auto mean_v = std::make_shared<std::vector<T>>(rows);
  auto rstd_v = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(x.numel());
  const T* in = x.data().data();
  const T* pg = gamma.data().data();
  const T* pb = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = in + r * n;
    T mu, rstd;
    group_stats(src, n, mu, rstd);
    (*mean_v)[r] = mu;
    (*rstd_v)[r] = rstd;
    T* dst = out.data() + r * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = pg[i] * (src[i] - mu) * rstd + pb[i];
  }

  return make_op<T>(
      "layer_norm", s, std::move(out), {x, gamma, beta},
      [rows, n, mean_v, rstd_v](detail::Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        const T* g = self.grad.data();
        if (xn.requires_grad) xn.ensure_grad();
        if (gn.requires_grad) gn.ensure_grad();
        if (bn.requires_grad) bn.ensure_grad();
        T inv_n = T(1) / static_cast<T>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* go = g + r * n;
          const T* src = xn.data.data() + r * n;
          T mu = (*mean_v)[r], rstd = (*rstd_v)[r];
          if (gn.requires_grad || bn.requires_grad) {
            for (std::size_t i = 0; i < n; ++i) {
              T xhat = (src[i] - mu) * rstd;
              if (gn.requires_grad) gn.grad[i] += go[i] * xhat;
              if (bn.requires_grad) bn.grad[i] += go[i];
            }
          }
          if (xn.requires_grad) {
            T s1 = 0, s2 = 0;
            for (std::size_t i = 0; i < n; ++i) {
              T xhat = (src[i] - mu) * rstd;
              T dxh = go[i] * gn.data[i];
              s1 += dxh;
              s2 += dxh * xhat;
            }
            s1 *= inv_n;
            s2 *= inv_n;
            T* gx = xn.grad.data() + r * n;
            for (std::size_t i = 0; i < n; ++i) {
              T xhat = (src[i] - mu) * rstd;
              gx[i] += rstd * (go[i] * gn.data[i] - s1 - xhat * s2);
            }
          }
        }
      });
}

#define SCT_INSTANTIATE(T)                                                        \
  template Tensor<T> instance_norm(const Tensor<T>&, const Tensor<T>&,            \
                                   const Tensor<T>&);                             \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

SCT_INSTANTIATE(float)
SCT_INSTANTIATE(double)
#undef SCT_INSTANTIATE

}  // namespace sct
