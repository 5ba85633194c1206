#pragma once

#include <cstddef>
#include <vector>

#include "sct/tensor.hpp"

namespace sct {

// Per-parameter Adam moments. One state drives a whole parameter list; the
// step counter is shared, moments are per element.
template <class T>
struct AdamState {
  T lr = T(0.02);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  std::size_t step = 0;
  std::vector<std::vector<T>> m, v;

  void init(const std::vector<Tensor<T>>& params);
};

// One bias-corrected Adam update, reading each parameter's accumulated grad
// and writing the data buffer in place. Parameters without an accumulated
// grad this step are treated as having zero gradient.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state);

using AdamStateF = AdamState<float>;

}  // namespace sct
