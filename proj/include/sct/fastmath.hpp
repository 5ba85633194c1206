#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <type_traits>

namespace sct {

// Branch-free exp for non-positive float arguments (the discretization only
// ever evaluates exp(delta * A) with delta > 0, A < 0). Range reduction to
// exp(x) = 2^n * exp(r), |r| <= ln2/2, degree-5 polynomial; max relative
// error is ~3e-7 over [-87, 0]. Written scalar so the compiler can
// auto-vectorize the scan kernels.
inline float fast_exp_neg(float x) {
  if (x < -87.0f) return 0.0f;
  const float log2e = 1.442695040888963f;
  const float ln2_hi = 0.693145751953125f;
  const float ln2_lo = 1.42860677e-06f;
  float nf = x * log2e;
  // round-to-nearest without touching the FP environment
  nf = nf >= 0.0f ? static_cast<float>(static_cast<int>(nf + 0.5f))
                  : static_cast<float>(static_cast<int>(nf - 0.5f));
  float r = x - nf * ln2_hi;
  r -= nf * ln2_lo;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  std::int32_t n = static_cast<std::int32_t>(nf);
  std::int32_t bits;
  std::memcpy(&bits, &p, 4);
  bits += n << 23;
  float out;
  std::memcpy(&out, &bits, 4);
  return out;
}

// Precision-dispatched exp for the SSM kernels: the float training path uses
// the polynomial above, the double verification path uses libm.
inline float ssm_exp(float x) { return fast_exp_neg(x); }
inline double ssm_exp(double x) { return std::exp(x); }

template <class T>
inline T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <class T>
inline T softplus_val(T x) {
  if (x > T(20)) return x;
  if (x < T(-20)) return std::exp(x);
  return std::log1p(std::exp(x));
}

// (exp(z) - 1)/z, continuous through z = 0. The direct form cancels badly for
// small |z|: the double path leans on expm1, the float path on a short series.
template <class T>
inline T em1z(T z) {
  if constexpr (std::is_same_v<T, double>) {
    if (z == 0.0) return 1.0;
    return std::expm1(z) / z;
  } else {
    if (z > T(-0.02) && z < T(0.02)) return T(1) + z * (T(0.5) + z * (T(1) / T(6)));
    return (ssm_exp(z) - T(1)) / z;
  }
}

// g(z) = (z*exp(z) - (exp(z)-1)) / z^2, the z-derivative of em1z. Shows up in
// d(B_bar)/dA.
template <class T>
inline T em1z_deriv(T z) {
  if constexpr (std::is_same_v<T, double>) {
    if (z > -1e-4 && z < 1e-4)
      return 0.5 + z * (1.0 / 3.0 + z * 0.125);
    return (z * std::exp(z) - std::expm1(z)) / (z * z);
  } else {
    if (z > T(-0.02) && z < T(0.02))
      return T(0.5) + z * (T(1) / T(3) + z * T(0.125));
    T e = ssm_exp(z);
    return (z * e - (e - T(1))) / (z * z);
  }
}

}  // namespace sct
