#pragma once

#include <string>

#include "sct/tensor.hpp"

namespace sct {

// Intensity mapping between Hounsfield units and the [-1,1] working range.
// The full HU range [-1024, 3000] maps linearly; inputs are clipped first.
double hu_to_norm(double hu);
double norm_to_hu(double v);

// Sub-range of the normalized intensity axis re-stretched to [-1,1] before
// an L1 comparison. Constants follow the published soft-tissue / bone bounds.
struct IntensityWindow {
  double lo;
  double hi;
  const char* label;
};

inline constexpr IntensityWindow kWindowGlobal{-1.0, 1.0, "glob"};
inline constexpr IntensityWindow kWindowSoft{-0.615, -0.368, "soft"};
inline constexpr IntensityWindow kWindowBone{-0.368, 1.0, "bone"};

// clip(2*(P - lo)/(hi - lo) - 1, -1, 1). Differentiable; gradient is zero
// where the clip saturates. ContractError when hi <= lo.
template <class T>
Tensor<T> window_renormalize(const Tensor<T>& p, const IntensityWindow& w);

// L1 in the global range plus L1 under the soft and bone windows,
// unweighted. All four scalars share one graph, so total backpropagates
// through every term.
template <class T>
struct MCLTerms {
  Tensor<T> total, glob, soft, bone;
};

template <class T>
MCLTerms<T> mcl_loss(const Tensor<T>& pred, const Tensor<T>& target);

}  // namespace sct
