#include <cstring>
#include <numeric>

#include "sct/ops.hpp"

namespace sct {

namespace {

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

}  // namespace

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  std::vector<T> out = x.data();  // copy; layout is identical
  return make_op<T>("reshape", std::move(shape), std::move(out), {x},
                    [](detail::Node<T>& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      p.ensure_grad();
                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                        p.grad[i] += self.grad[i];
                    });
}

template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const Shape& s = x.shape();
  if (axes.size() != s.size())
    throw ShapeError("permute: expected " + std::to_string(s.size()) + " axes, got " +
                     std::to_string(axes.size()));
  std::vector<bool> seen(s.size(), false);
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= s.size() || seen[axes[i]])
      throw ShapeError("permute: invalid axis list");
    seen[axes[i]] = true;
    out_shape[i] = s[axes[i]];
  }
  auto in_strides = strides_of(s);
  auto out_strides = strides_of(out_shape);
  // stride of output axis i in the input layout
  std::vector<std::size_t> map(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) map[i] = in_strides[axes[i]];

  std::vector<T> out(x.numel());
  const T* in = x.data().data();
  std::size_t n = out.size();
  std::size_t rank = s.size();
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t rem = o, src = 0;
    for (std::size_t i = 0; i < rank; ++i) {
      src += (rem / out_strides[i]) * map[i];
      rem %= out_strides[i];
    }
    out[o] = in[src];
  }
  return make_op<T>("permute", out_shape, std::move(out), {x},
                    [out_strides, map, rank](detail::Node<T>& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      p.ensure_grad();
                      for (std::size_t o = 0; o < self.grad.size(); ++o) {
                        std::size_t rem = o, src = 0;
                        for (std::size_t i = 0; i < rank; ++i) {
                          src += (rem / out_strides[i]) * map[i];
                          rem %= out_strides[i];
                        }
                        p.grad[src] += self.grad[o];
                      }
                    });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = s0;
  std::size_t axis_total = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i])
        throw ShapeError("concat: shape mismatch off axis, " + shape_str(s0) + " vs " +
                         shape_str(s));
    axis_total += s[axis];
  }
  out_shape[axis] = axis_total;

  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];

  std::vector<T> out(numel_of(out_shape));
  std::vector<std::size_t> chunk(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) chunk[k] = xs[k].shape()[axis] * inner;
  std::size_t row = axis_total * inner;
  for (std::size_t b = 0; b < outer; ++b) {
    std::size_t off = b * row;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      std::memcpy(out.data() + off, xs[k].data().data() + b * chunk[k],
                  chunk[k] * sizeof(T));
      off += chunk[k];
    }
  }
  return make_op<T>("concat", out_shape, std::move(out), xs,
                    [outer, chunk, row](detail::Node<T>& self) {
                      for (std::size_t b = 0; b < outer; ++b) {
                        std::size_t off = b * row;
                        for (std::size_t k = 0; k < self.parents.size(); ++k) {
                          auto& p = *self.parents[k];
                          if (p.requires_grad) {
                            p.ensure_grad();
                            const T* g = self.grad.data() + off;
                            T* dst = p.grad.data() + b * chunk[k];
                            for (std::size_t i = 0; i < chunk[k]; ++i) dst[i] += g[i];
                          }
                          off += chunk[k];
                        }
                      }
                    });
}

template <class T>
Tensor<T> reorder_tokens(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const Shape& s = x.shape();
  if (s.size() != 3)
    throw ShapeError("reorder_tokens: expected [B,L,E], got " + shape_str(s));
  std::size_t B = s[0], L = s[1], E = s[2];
  if (perm.size() != L)
    throw ShapeError("reorder_tokens: permutation length " + std::to_string(perm.size()) +
                     " does not match L=" + std::to_string(L));
  std::vector<T> out(x.numel());
  const T* in = x.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < L; ++i)
      std::memcpy(out.data() + (b * L + i) * E, in + (b * L + perm[i]) * E,
                  E * sizeof(T));
  return make_op<T>("reorder_tokens", s, std::move(out), {x},
                    [B, L, E, perm](detail::Node<T>& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      p.ensure_grad();
                      const T* g = self.grad.data();
                      for (std::size_t b = 0; b < B; ++b)
                        for (std::size_t i = 0; i < L; ++i) {
                          T* dst = p.grad.data() + (b * L + perm[i]) * E;
                          const T* src = g + (b * L + i) * E;
                          for (std::size_t e = 0; e < E; ++e) dst[e] += src[e];
                        }
                    });
}

// [B,C,N,N] -> [B,L,C*M*M] with L=(N/M)^2; token t=(gy,gx) in row-major grid
// order, features packed as (c, dy, dx).
template <class T>
Tensor<T> patchify(const Tensor<T>& x, std::size_t M) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[2] != s[3])
    throw ShapeError("patchify: expected [B,C,N,N], got " + shape_str(s));
  std::size_t B = s[0], C = s[1], N = s[2];
  if (M == 0 || N % M != 0)
    throw ShapeError("patchify: patch size " + std::to_string(M) +
                     " does not divide N=" + std::to_string(N));
  std::size_t G = N / M, L = G * G, F = C * M * M;
  std::vector<T> out(B * L * F);
  const T* in = x.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t gy = 0; gy < G; ++gy)
      for (std::size_t gx = 0; gx < G; ++gx) {
        T* tok = out.data() + (b * L + gy * G + gx) * F;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dy = 0; dy < M; ++dy) {
            const T* src = in + ((b * C + c) * N + gy * M + dy) * N + gx * M;
            T* dst = tok + (c * M + dy) * M;
            std::memcpy(dst, src, M * sizeof(T));
          }
      }
  return make_op<T>("patchify", Shape{B, L, F}, std::move(out), {x},
                    [B, C, N, M, G, L, F](detail::Node<T>& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      p.ensure_grad();
                      const T* g = self.grad.data();
                      for (std::size_t b = 0; b < B; ++b)
                        for (std::size_t gy = 0; gy < G; ++gy)
                          for (std::size_t gx = 0; gx < G; ++gx) {
                            const T* tok = g + (b * L + gy * G + gx) * F;
                            for (std::size_t c = 0; c < C; ++c)
                              for (std::size_t dy = 0; dy < M; ++dy) {
                                T* dst = p.grad.data() +
                                         ((b * C + c) * N + gy * M + dy) * N + gx * M;
                                const T* src = tok + (c * M + dy) * M;
                                for (std::size_t dx = 0; dx < M; ++dx) dst[dx] += src[dx];
                              }
                          }
                    });
}

template <class T>
Tensor<T> unpatchify(const Tensor<T>& x, std::size_t M, std::size_t C, std::size_t N) {
  const Shape& s = x.shape();
  std::size_t G = N / M;
  if (M == 0 || N % M != 0 || s.size() != 3 || s[1] != G * G || s[2] != C * M * M)
    throw ShapeError("unpatchify: input " + shape_str(s) + " incompatible with M=" +
                     std::to_string(M) + " C=" + std::to_string(C) +
                     " N=" + std::to_string(N));
  std::size_t B = s[0], L = G * G, F = C * M * M;
  std::vector<T> out(B * C * N * N);
  const T* in = x.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t gy = 0; gy < G; ++gy)
      for (std::size_t gx = 0; gx < G; ++gx) {
        const T* tok = in + (b * L + gy * G + gx) * F;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dy = 0; dy < M; ++dy) {
            T* dst = out.data() + ((b * C + c) * N + gy * M + dy) * N + gx * M;
            std::memcpy(dst, tok + (c * M + dy) * M, M * sizeof(T));
          }
      }
  return make_op<T>("unpatchify", Shape{B, C, N, N}, std::move(out), {x},
                    [B, C, N, M, G, L, F](detail::Node<T>& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      p.ensure_grad();
                      const T* g = self.grad.data();
                      for (std::size_t b = 0; b < B; ++b)
                        for (std::size_t gy = 0; gy < G; ++gy)
                          for (std::size_t gx = 0; gx < G; ++gx) {
                            T* tok = p.grad.data() + (b * L + gy * G + gx) * F;
                            for (std::size_t c = 0; c < C; ++c)
                              for (std::size_t dy = 0; dy < M; ++dy) {
                                const T* src =
                                    g + ((b * C + c) * N + gy * M + dy) * N + gx * M;
                                T* dst = tok + (c * M + dy) * M;
                                for (std::size_t dx = 0; dx < M; ++dx) dst[dx] += src[dx];
                              }
                          }
                    });
}

#define SCT_INSTANTIATE(T)                                                          \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                              \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);    \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);            \
  template Tensor<T> reorder_tokens(const Tensor<T>&, const std::vector<std::size_t>&); \
  template Tensor<T> patchify(const Tensor<T>&, std::size_t);                       \
  template Tensor<T> unpatchify(const Tensor<T>&, std::size_t, std::size_t, std::size_t);

SCT_INSTANTIATE(float)
SCT_INSTANTIATE(double)
#undef SCT_INSTANTIATE

}  // namespace sct
