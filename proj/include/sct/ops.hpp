#pragma once

#include <cstddef>
#include <vector>

#include "sct/tensor.hpp"

namespace sct {

// ---- elementwise -----------------------------------------------------------
// Binary ops accept equal shapes, or a `b` whose shape is a trailing suffix of
// `a`'s (broadcast over the leading axes); the broadcast adjoint sums over the
// broadcast axes.
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> affine(const Tensor<T>& x, T scale, T shift);
template <class T> Tensor<T> exp(const Tensor<T>& x);
template <class T> Tensor<T> tanh(const Tensor<T>& x);
template <class T> Tensor<T> silu(const Tensor<T>& x);
template <class T> Tensor<T> leaky_relu(const Tensor<T>& x, T negative_slope);
template <class T> Tensor<T> softplus(const Tensor<T>& x);
// Gradient is identity for lo <= x <= hi and exactly zero where the output
// was clamped.
template <class T> Tensor<T> clip(const Tensor<T>& x, T lo, T hi);

// ---- data movement ---------------------------------------------------------
template <class T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <class T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis);
// Reorders the token axis of [B,L,E]: out[b,i,:] = x[b,perm[i],:].
template <class T> Tensor<T> reorder_tokens(const Tensor<T>& x, const std::vector<std::size_t>& perm);
// [B,C,N,N] -> [B,L,C*M*M] with L=(N/M)^2; tokens enumerate the patch grid in
// row-major order and each token packs its patch as (c, dy, dx), row-major.
template <class T> Tensor<T> patchify(const Tensor<T>& x, std::size_t patch);
template <class T> Tensor<T> unpatchify(const Tensor<T>& x, std::size_t patch,
                                        std::size_t channels, std::size_t side);

// ---- linear algebra --------------------------------------------------------
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// x: [..., In], w: [In, Out], b: [Out] (undefined tensor = no bias).
template <class T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// ---- convolution / resampling ----------------------------------------------
// x: [B,Cin,H,W], w: [Cout,Cin,k,k] with odd k, stride 1, zero padding k/2.
template <class T> Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
// w: [C,1,3,3], one 3x3 filter per channel.
template <class T> Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
// 2x2 max pooling; gradient routes to the argmax (first element wins ties).
template <class T> Tensor<T> maxpool2(const Tensor<T>& x);
// Nearest-neighbour x2 upsampling; gradient sums over the replicated cells.
template <class T> Tensor<T> upsample2(const Tensor<T>& x);

// ---- normalization ---------------------------------------------------------
// Per-(sample, channel) statistics over HxW; eps 1e-5; gamma/beta: [C].
template <class T> Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta);
// Statistics over the last axis; gamma/beta: [E].
template <class T> Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta);

// ---- reductions ------------------------------------------------------------
template <class T> Tensor<T> sum(const Tensor<T>& x);
template <class T> Tensor<T> mean(const Tensor<T>& x);
// mean(|a - b|); subgradient sign(a-b)/N with sign(0) = 0.
template <class T> Tensor<T> l1_mean(const Tensor<T>& a, const Tensor<T>& b);

namespace fault {
// Test fixture: deliberately corrupts the clip adjoint so verification suites
// can prove they catch a broken gradient. Never set outside tests.
extern bool corrupt_clip_grad;
}  // namespace fault

}  // namespace sct
