#include <cstdint>
#include <cstring>

#include "sct/blas.hpp"
#include "sct/ops.hpp"

namespace sct {

namespace {

// cols: [Cin*k*k, H*W], row (c*k+dy)*k+dx, column y*W+x, zero padding.
template <class T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
            T* cols) {
  std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  std::ptrdiff_t Hs = static_cast<std::ptrdiff_t>(H);
  std::ptrdiff_t Ws = static_cast<std::ptrdiff_t>(W);
  std::size_t hw = H * W;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t dy = 0; dy < k; ++dy)
      for (std::size_t dx = 0; dx < k; ++dx) {
        T* row = cols + ((c * k + dy) * k + dx) * hw;
        std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - pad;
        std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pad;
        for (std::ptrdiff_t y = 0; y < Hs; ++y) {
          std::ptrdiff_t sy = y + oy;
          T* dst = row + y * Ws;
          if (sy < 0 || sy >= Hs) {
            std::memset(dst, 0, W * sizeof(T));
            continue;
          }
          const T* src = x + (c * H + sy) * W;
          for (std::ptrdiff_t xx = 0; xx < Ws; ++xx) {
            std::ptrdiff_t sx = xx + ox;
            dst[xx] = (sx < 0 || sx >= Ws) ? T(0) : src[sx];
          }
        }
      }
}

// Adjoint of im2col: scatter-add cols back into an image.
template <class T>
void col2im(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
            T* x) {
  std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  std::ptrdiff_t Hs = static_cast<std::ptrdiff_t>(H);
  std::ptrdiff_t Ws = static_cast<std::ptrdiff_t>(W);
  std::size_t hw = H * W;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t dy = 0; dy < k; ++dy)
      for (std::size_t dx = 0; dx < k; ++dx) {
        const T* row = cols + ((c * k + dy) * k + dx) * hw;
        std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - pad;
        std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pad;
        for (std::ptrdiff_t y = 0; y < Hs; ++y) {
          std::ptrdiff_t sy = y + oy;
          if (sy < 0 || sy >= Hs) continue;
          const T* src = row + y * Ws;
          T* dst = x + (c * H + sy) * W;
          for (std::ptrdiff_t xx = 0; xx < Ws; ++xx) {
            std::ptrdiff_t sx = xx + ox;
            if (sx >= 0 && sx < Ws) dst[sx] += src[xx];
          }
        }
      }
}

}  // namespace

// x: [B,Cin,H,W], w: [Cout,Cin,k,k] with odd k, b: [Cout] or empty.
// Stride 1, zero padding k/2, so spatial size is preserved.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 4 || sw.size() != 4 || sw[2] != sw[3] || sw[2] % 2 == 0 ||
      sx[1] != sw[1])
    throw ShapeError("conv2d: input " + shape_str(sx) + " vs weight " + shape_str(sw));
  bool has_bias = b.defined();
  if (has_bias && (b.shape().size() != 1 || b.shape()[0] != sw[0]))
    throw ShapeError("conv2d: bias " + shape_str(b.shape()) + " vs weight " +
                     shape_str(sw));
  std::size_t B = sx[0], Cin = sx[1], H = sx[2], W = sx[3];
  std::size_t Cout = sw[0], k = sw[2];
  std::size_t K = Cin * k * k, hw = H * W;

  std::vector<T> out(B * Cout * hw);
  std::vector<T> cols(K * hw);
  for (std::size_t bi = 0; bi < B; ++bi) {
    im2col(x.data().data() + bi * Cin * hw, Cin, H, W, k, cols.data());
    blas::gemm(false, false, Cout, hw, K, T(1), w.data().data(), K, cols.data(), hw,
               T(0), out.data() + bi * Cout * hw, hw);
  }
  if (has_bias) {
    const T* pb = b.data().data();
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t co = 0; co < Cout; ++co) {
        T* plane = out.data() + (bi * Cout + co) * hw;
        for (std::size_t i = 0; i < hw; ++i) plane[i] += pb[co];
      }
  }

  std::vector<Tensor<T>> parents = {x, w};
  if (has_bias) parents.push_back(b);
  return make_op<T>(
      "conv2d", Shape{B, Cout, H, W}, std::move(out), parents,
      [B, Cin, H, W, Cout, k, K, hw, has_bias](detail::Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        const T* g = self.grad.data();
        std::vector<T> cols(K * hw);
        std::vector<T> dcols(xn.requires_grad ? K * hw : 0);
        if (xn.requires_grad) xn.ensure_grad();
        if (wn.requires_grad) wn.ensure_grad();
        for (std::size_t bi = 0; bi < B; ++bi) {
          const T* gb = g + bi * Cout * hw;
          if (wn.requires_grad) {
            im2col(xn.data.data() + bi * Cin * hw, Cin, H, W, k, cols.data());
            // dW += G_b * cols^T : [Cout,hw] x [hw,K]
            blas::gemm(false, true, Cout, K, hw, T(1), gb, hw, cols.data(), hw, T(1),
                       wn.grad.data(), K);
          }
          if (xn.requires_grad) {
            // dcols = W^T * G_b : [K,Cout] x [Cout,hw]
            blas::gemm(true, false, K, hw, Cout, T(1), wn.data.data(), K, gb, hw, T(0),
                       dcols.data(), hw);
            col2im(dcols.data(), Cin, H, W, k, xn.grad.data() + bi * Cin * hw);
          }
        }
        if (has_bias && self.parents[2]->requires_grad) {
          auto& bn = *self.parents[2];
          bn.ensure_grad();
          for (std::size_t bi = 0; bi < B; ++bi)
            for (std::size_t co = 0; co < Cout; ++co) {
              const T* plane = g + (bi * Cout + co) * hw;
              T acc = 0;
              for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
              bn.grad[co] += acc;
            }
        }
      });
}

// x: [B,C,H,W], w: [C,1,3,3], b: [C] or empty. One 3x3 filter per channel.
template <class T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 4 || sw.size() != 4 || sw[1] != 1 || sw[2] != 3 || sw[3] != 3 ||
      sw[0] != sx[1])
    throw ShapeError("depthwise_conv2d: input " + shape_str(sx) + " vs weight " +
                     shape_str(sw));
  bool has_bias = b.defined();
  if (has_bias && (b.shape().size() != 1 || b.shape()[0] != sx[1]))
    throw ShapeError("depthwise_conv2d: bias " + shape_str(b.shape()));
  std::size_t B = sx[0], C = sx[1], H = sx[2], W = sx[3];
  std::size_t hw = H * W;
  std::ptrdiff_t Hs = static_cast<std::ptrdiff_t>(H);
  std::ptrdiff_t Ws = static_cast<std::ptrdiff_t>(W);

  std::vector<T> out(x.numel());
  const T* in = x.data().data();
  const T* pw = w.data().data();
  const T* pb = has_bias ? b.data().data() : nullptr;
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* plane = in + bc * hw;
    const T* f = pw + (bc % C) * 9;
    T bias_v = has_bias ? pb[bc % C] : T(0);
    T* dst = out.data() + bc * hw;
    for (std::ptrdiff_t y = 0; y < Hs; ++y)
      for (std::ptrdiff_t xx = 0; xx < Ws; ++xx) {
        T acc = bias_v;
        for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
          std::ptrdiff_t sy = y + dy;
          if (sy < 0 || sy >= Hs) continue;
          for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
            std::ptrdiff_t sx = xx + dx;
            if (sx < 0 || sx >= Ws) continue;
            acc += f[(dy + 1) * 3 + (dx + 1)] * plane[sy * Ws + sx];
          }
        }
        dst[y * Ws + xx] = acc;
      }
  }

  std::vector<Tensor<T>> parents = {x, w};
  if (has_bias) parents.push_back(b);
  return make_op<T>(
      "depthwise_conv2d", sx, std::move(out), parents,
      [B, C, H, W, hw, has_bias](detail::Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        const T* g = self.grad.data();
        std::ptrdiff_t Hs = static_cast<std::ptrdiff_t>(H);
        std::ptrdiff_t Ws = static_cast<std::ptrdiff_t>(W);
        if (xn.requires_grad) xn.ensure_grad();
        if (wn.requires_grad) wn.ensure_grad();
        for (std::size_t bc = 0; bc < B * C; ++bc) {
          const T* gp = g + bc * hw;
          const T* plane = xn.data.data() + bc * hw;
          const T* f = wn.data.data() + (bc % C) * 9;
          T* gx = xn.requires_grad ? xn.grad.data() + bc * hw : nullptr;
          T* gw = wn.requires_grad ? wn.grad.data() + (bc % C) * 9 : nullptr;
          for (std::ptrdiff_t y = 0; y < Hs; ++y)
            for (std::ptrdiff_t xx = 0; xx < Ws; ++xx) {
              T go = gp[y * Ws + xx];
              for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
                std::ptrdiff_t sy = y + dy;
                if (sy < 0 || sy >= Hs) continue;
                for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
                  std::ptrdiff_t sx = xx + dx;
                  if (sx < 0 || sx >= Ws) continue;
                  std::size_t fi = (dy + 1) * 3 + (dx + 1);
                  if (gx) gx[sy * Ws + sx] += go * f[fi];
                  if (gw) gw[fi] += go * plane[sy * Ws + sx];
                }
              }
            }
        }
        if (has_bias && self.parents[2]->requires_grad) {
          auto& bn = *self.parents[2];
          bn.ensure_grad();
          for (std::size_t bc = 0; bc < B * C; ++bc) {
            const T* gp = g + bc * hw;
            T acc = 0;
            for (std::size_t i = 0; i < hw; ++i) acc += gp[i];
            bn.grad[bc % C] += acc;
          }
        }
      });
}

// 2x2 max pooling, stride 2; ties go to the earliest cell in row-major order.
template <class T>
Tensor<T> maxpool2(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0)
    throw ShapeError("maxpool2: expected [B,C,2h,2w], got " + shape_str(s));
  std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
  std::size_t Ho = H / 2, Wo = W / 2;
  std::vector<T> out(B * C * Ho * Wo);
  auto argmax = std::make_shared<std::vector<std::uint8_t>>(out.size());
  const T* in = x.data().data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* plane = in + bc * H * W;
    T* dst = out.data() + bc * Ho * Wo;
    std::uint8_t* am = argmax->data() + bc * Ho * Wo;
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx) {
        T best = plane[(2 * y) * W + 2 * xx];
        std::uint8_t bi = 0;
        for (std::uint8_t c = 1; c < 4; ++c) {
          T v = plane[(2 * y + c / 2) * W + 2 * xx + c % 2];
          if (v > best) {
            best = v;
            bi = c;
          }
        }
        dst[y * Wo + xx] = best;
        am[y * Wo + xx] = bi;
      }
  }
  return make_op<T>("maxpool2", Shape{B, C, Ho, Wo}, std::move(out), {x},
                    [B, C, H, W, Ho, Wo, argmax](detail::Node<T>& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      p.ensure_grad();
                      const T* g = self.grad.data();
                      for (std::size_t bc = 0; bc < B * C; ++bc) {
                        T* gx = p.grad.data() + bc * H * W;
                        const T* gp = g + bc * Ho * Wo;
                        const std::uint8_t* am = argmax->data() + bc * Ho * Wo;
                        for (std::size_t y = 0; y < Ho; ++y)
                          for (std::size_t xx = 0; xx < Wo; ++xx) {
                            std::uint8_t c = am[y * Wo + xx];
                            gx[(2 * y + c / 2) * W + 2 * xx + c % 2] += gp[y * Wo + xx];
                          }
                      }
                    });
}

// Nearest-neighbour 2x upsampling; each input cell feeds a 2x2 output block.
template <class T>
Tensor<T> upsample2(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("upsample2: expected [B,C,H,W], got " + shape_str(s));
  std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
  std::size_t Ho = H * 2, Wo = W * 2;
  std::vector<T> out(B * C * Ho * Wo);
  const T* in = x.data().data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* plane = in + bc * H * W;
    T* dst = out.data() + bc * Ho * Wo;
    for (std::size_t y = 0; y < Ho; ++y) {
      const T* src = plane + (y / 2) * W;
      T* row = dst + y * Wo;
      for (std::size_t xx = 0; xx < Wo; ++xx) row[xx] = src[xx / 2];
    }
  }
  return make_op<T>("upsample2", Shape{B, C, Ho, Wo}, std::move(out), {x},
                    [B, C, H, W, Ho, Wo](detail::Node<T>& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      p.ensure_grad();
                      const T* g = self.grad.data();
                      for (std::size_t bc = 0; bc < B * C; ++bc) {
                        T* gx = p.grad.data() + bc * H * W;
                        const T* gp = g + bc * Ho * Wo;
                        for (std::size_t y = 0; y < Ho; ++y)
                          for (std::size_t xx = 0; xx < Wo; ++xx)
                            gx[(y / 2) * W + xx / 2] += gp[y * Wo + xx];
                      }
                    });
}

#define SCT_INSTANTIATE(T)                                                             \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&,              \
                                      const Tensor<T>&);                               \
  template Tensor<T> maxpool2(const Tensor<T>&);                                       \
  template Tensor<T> upsample2(const Tensor<T>&);

SCT_INSTANTIATE(float)
SCT_INSTANTIATE(double)
#undef SCT_INSTANTIATE

}  // namespace sct
