#include "sct/adam.hpp"

#include <cmath>

namespace sct {

template <class T>
void AdamState<T>::init(const std::vector<Tensor<T>>& params) {
  step = 0;
  m.assign(params.size(), {});
  v.assign(params.size(), {});
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i].assign(params[i].numel(), T(0));
    v[i].assign(params[i].numel(), T(0));
  }
}

template <class T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ContractError("adam_step: state holds " + std::to_string(state.m.size()) +
                        " moment buffers for " + std::to_string(params.size()) +
                        " params");
  ++state.step;
  T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(state.beta1),
                                         static_cast<double>(state.step)));
  T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(state.beta2),
                                         static_cast<double>(state.step)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (state.m[i].size() != p.numel())
      throw ContractError("adam_step: moment size mismatch on param " +
                          std::to_string(i));
    if (!p.has_grad()) continue;  // zero gradient: moments decay but m stays 0
    const auto& g = p.grad();
    T* w = p.data().data();
    T* mi = state.m[i].data();
    T* vi = state.v[i].data();
    for (std::size_t j = 0; j < g.size(); ++j) {
      mi[j] = state.beta1 * mi[j] + (T(1) - state.beta1) * g[j];
      vi[j] = state.beta2 * vi[j] + (T(1) - state.beta2) * g[j] * g[j];
      T mhat = mi[j] / bc1;
      T vhat = vi[j] / bc2;
      w[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::vector<Tensor<float>>&, AdamState<float>&);
template void adam_step(std::vector<Tensor<double>>&, AdamState<double>&);

}  // namespace sct
