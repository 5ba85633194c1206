#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "sct/rng.hpp"
#include "sct/tensor.hpp"

namespace sct {

// Input-dependent state-space parameters for one scan direction.
// A = -exp(A_log) is diagonal per channel: state d of channel e decays
// independently. Delta/B/C are produced from each token by linear maps.
template <class T>
struct SSMParams {
  Tensor<T> A_log;       // [E,D]
  Tensor<T> w_delta;     // [E,E], per-channel timestep logits
  Tensor<T> delta_bias;  // [E]
  Tensor<T> w_B;         // [E,D]
  Tensor<T> w_C;         // [E,D]
  Tensor<T> D_skip;      // [E]

  static SSMParams init(std::size_t E, std::size_t D, Pcg32& rng);

  std::vector<std::pair<std::string, Tensor<T>>> named() const;
};

// A_bar = exp(delta*A), B_bar = ((exp(delta*A)-1)/A)*B, elementwise over
// (token, channel, state). Plain arrays, no graph; the scan inlines the same
// arithmetic so oracle comparisons see identical rounding.
// delta: [L,E] (>0 expected, 0 allowed), A: [E,D] (all entries < 0), B: [L,D].
template <class T>
std::pair<Tensor<T>, Tensor<T>> discretize(const Tensor<T>& delta, const Tensor<T>& A,
                                           const Tensor<T>& B);

// The selective scan: for each channel e,
//   h_t = A_bar_t (.) h_{t-1} + B_bar_t * x_t[e],  y_t[e] = <C_t, h_t> + D_skip[e]*x_t[e]
// with delta/B/C computed from x_t. One composite autograd op; backward
// recomputes intermediate states from sqrt(L)-spaced checkpoints.
// x: [L,E] or [B,L,E]; output has the same shape.
template <class T>
Tensor<T> selective_scan(const Tensor<T>& x, const SSMParams<T>& p);

enum class ScanDirection { RowForward, RowBackward, ColForward, ColBackward };

// Visit order of grid cells (row-major indices into a GxG grid) for one
// direction; position k of the result is the cell scanned k-th.
std::vector<std::size_t> scan_order(ScanDirection dir, std::size_t G);
std::vector<std::size_t> invert_order(const std::vector<std::size_t>& order);

// Four directional scans over a square token grid, merged by summation,
// then layer-normalized and projected.
template <class T>
struct SS2DParams {
  SSMParams<T> dir[4];
  Tensor<T> ln_gamma, ln_beta;  // [E]
  Tensor<T> out_w;              // [E,E]
  Tensor<T> out_b;              // [E]

  static SS2DParams init(std::size_t E, std::size_t D, Pcg32& rng);

  std::vector<std::pair<std::string, Tensor<T>>> named() const;
};

// x: [G,G,E] or [B,G,G,E]; output has the same shape.
template <class T>
Tensor<T> ss2d(const Tensor<T>& x, const SS2DParams<T>& p);

}  // namespace sct
