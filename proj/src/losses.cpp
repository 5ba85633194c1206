#include "sct/losses.hpp"

#include <algorithm>

#include "sct/ops.hpp"

namespace sct {

double hu_to_norm(double hu) {
  double h = std::clamp(hu, -1024.0, 3000.0);
  return 2.0 * (h + 1024.0) / 4024.0 - 1.0;
}

double norm_to_hu(double v) {
  return (v + 1.0) * 0.5 * 4024.0 - 1024.0;
}

template <class T>
Tensor<T> window_renormalize(const Tensor<T>& p, const IntensityWindow& w) {
  if (!(w.hi > w.lo))
    throw ContractError(std::string("degenerate intensity window '") + w.label + "'");
  T scale = static_cast<T>(2.0 / (w.hi - w.lo));
  T shift = static_cast<T>(-2.0 * w.lo / (w.hi - w.lo) - 1.0);
  return clip(affine(p, scale, shift), T(-1), T(1));
}

template <class T>
MCLTerms<T> mcl_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("mcl_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  MCLTerms<T> t;
  t.glob = l1_mean(pred, target);
  t.soft = l1_mean(window_renormalize(pred, kWindowSoft),
                   window_renormalize(target, kWindowSoft));
  t.bone = l1_mean(window_renormalize(pred, kWindowBone),
                   window_renormalize(target, kWindowBone));
  t.total = add(add(t.glob, t.soft), t.bone);
  return t;
}

#define SCT_INSTANTIATE(T)                                                        \
  template Tensor<T> window_renormalize(const Tensor<T>&, const IntensityWindow&); \
  template struct MCLTerms<T>;                                                    \
  template MCLTerms<T> mcl_loss(const Tensor<T>&, const Tensor<T>&);

SCT_INSTANTIATE(float)
SCT_INSTANTIATE(double)
#undef SCT_INSTANTIATE

}  // namespace sct
