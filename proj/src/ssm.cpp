#include "sct/ssm.hpp"

#include <cmath>
#include <cstring>
#include <memory>

#include "sct/blas.hpp"
#include "sct/fastmath.hpp"
#include "sct/ops.hpp"

namespace sct {

template <class T>
SSMParams<T> SSMParams<T>::init(std::size_t E, std::size_t D, Pcg32& rng) {
  SSMParams<T> p;
  // A = -(1..D) per channel: a spread of decay rates, stable for any delta
  std::vector<T> alog(E * D);
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t d = 0; d < D; ++d)
      alog[e * D + d] = static_cast<T>(std::log(static_cast<double>(d + 1)));
  p.A_log = Tensor<T>::from_data({E, D}, std::move(alog), true);

  T k = static_cast<T>(1.0 / std::sqrt(static_cast<double>(E)));
  auto uni = [&](Shape s) {
    std::vector<T> v(numel_of(s));
    for (auto& x : v) x = static_cast<T>(rng.uniform(-k, k));
    return Tensor<T>::from_data(std::move(s), std::move(v), true);
  };
  p.w_delta = uni({E, E});

  // bias chosen so softplus lands in [0.01, 0.1]: small early timesteps
  std::vector<T> db(E);
  for (auto& b : db) {
    double dt = std::exp(rng.uniform(std::log(0.01), std::log(0.1)));
    b = static_cast<T>(std::log(std::expm1(dt)));
  }
  p.delta_bias = Tensor<T>::from_data({E}, std::move(db), true);

  p.w_B = uni({E, D});
  p.w_C = uni({E, D});
  p.D_skip = Tensor<T>::full({E}, T(1), true);
  return p;
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> SSMParams<T>::named() const {
  return {{"A_log", A_log}, {"w_delta", w_delta}, {"delta_bias", delta_bias},
          {"w_B", w_B},     {"w_C", w_C},         {"D_skip", D_skip}};
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> discretize(const Tensor<T>& delta, const Tensor<T>& A,
                                           const Tensor<T>& B) {
  const Shape& sd = delta.shape();
  const Shape& sa = A.shape();
  const Shape& sb = B.shape();
  if (sd.size() != 2 || sa.size() != 2 || sb.size() != 2 || sd[0] != sb[0] ||
      sd[1] != sa[0])
    throw ShapeError("discretize: delta " + shape_str(sd) + ", A " + shape_str(sa) +
                     ", B " + shape_str(sb));
  for (T a : A.data())
    if (!(a < T(0)))
      throw ContractError("discretize: A must be strictly negative elementwise");
  std::size_t L = sd[0], E = sd[1], D = sa[1];
  std::vector<T> abar(L * E * D), bbar(L * E * D);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t e = 0; e < E; ++e) {
      T dt = delta.data()[t * E + e];
      const T* ae = A.data().data() + e * D;
      const T* bt = B.data().data() + t * D;
      T* ao = abar.data() + (t * E + e) * D;
      T* bo = bbar.data() + (t * E + e) * D;
      for (std::size_t d = 0; d < D; ++d) {
        T z = dt * ae[d];
        ao[d] = ssm_exp(z);
        bo[d] = dt * em1z(z) * bt[d];
      }
    }
  return {Tensor<T>::from_data({L, E, D}, std::move(abar)),
          Tensor<T>::from_data({L, E, D}, std::move(bbar))};
}

namespace {

// delta pre-activation (bias included), B and C rows for all tokens at once
template <class T>
void scan_projections(const T* x, std::size_t R, std::size_t E, std::size_t D,
                      const T* wd, const T* bd, const T* wb, const T* wc,
                      std::vector<T>& dpre, std::vector<T>& Bm, std::vector<T>& Cm) {
  dpre.resize(R * E);
  Bm.resize(R * D);
  Cm.resize(R * D);
  blas::gemm(false, false, R, E, E, T(1), x, E, wd, E, T(0), dpre.data(), E);
  for (std::size_t r = 0; r < R; ++r) {
    T* row = dpre.data() + r * E;
    for (std::size_t e = 0; e < E; ++e) row[e] += bd[e];
  }
  blas::gemm(false, false, R, D, E, T(1), x, E, wb, D, T(0), Bm.data(), D);
  blas::gemm(false, false, R, D, E, T(1), x, E, wc, D, T(0), Cm.data(), D);
}

template <class T>
std::vector<T> neg_exp(const std::vector<T>& a_log) {
  std::vector<T> a(a_log.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    a[i] = -static_cast<T>(std::exp(static_cast<double>(a_log[i])));
  return a;
}

}  // namespace

template <class T>
Tensor<T> selective_scan(const Tensor<T>& x, const SSMParams<T>& p) {
  const Shape& s = x.shape();
  if (s.size() != 2 && s.size() != 3)
    throw ShapeError("selective_scan: expected [L,E] or [B,L,E], got " + shape_str(s));
  bool batched = s.size() == 3;
  std::size_t Bn = batched ? s[0] : 1;
  std::size_t L = batched ? s[1] : s[0];
  std::size_t E = batched ? s[2] : s[1];
  const Shape& sa = p.A_log.shape();
  if (sa.size() != 2 || sa[0] != E)
    throw ShapeError("selective_scan: A_log " + shape_str(sa) + " vs E=" +
                     std::to_string(E));
  std::size_t D = sa[1];
  if (p.w_delta.shape() != Shape{E, E} || p.delta_bias.shape() != Shape{E} ||
      p.w_B.shape() != Shape{E, D} || p.w_C.shape() != Shape{E, D} ||
      p.D_skip.shape() != Shape{E})
    throw ShapeError("selective_scan: parameter shapes inconsistent with E=" +
                     std::to_string(E) + ", D=" + std::to_string(D));

  std::size_t R = Bn * L;
  std::size_t S = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(L))));
  std::size_t nck = (L + S - 1) / S;

  const T* xd = x.data().data();
  std::vector<T> dpre, Bm, Cm;
  scan_projections(xd, R, E, D, p.w_delta.data().data(), p.delta_bias.data().data(),
                   p.w_B.data().data(), p.w_C.data().data(), dpre, Bm, Cm);
  std::vector<T> A = neg_exp(p.A_log.data());
  const T* dskip = p.D_skip.data().data();

  auto ck = std::make_shared<std::vector<T>>(Bn * nck * E * D);
  std::vector<T> y(R * E);
  std::vector<T> h(E * D);
  for (std::size_t b = 0; b < Bn; ++b) {
    std::fill(h.begin(), h.end(), T(0));
    for (std::size_t t = 0; t < L; ++t) {
      std::size_t row = b * L + t;
      if (t % S == 0)
        std::memcpy(ck->data() + (b * nck + t / S) * E * D, h.data(),
                    E * D * sizeof(T));
      const T* xr = xd + row * E;
      const T* bm = Bm.data() + row * D;
      const T* cm = Cm.data() + row * D;
      T* yr = y.data() + row * E;
      for (std::size_t e = 0; e < E; ++e) {
        T dt = softplus_val(dpre[row * E + e]);
        T xe = xr[e];
        T* he = h.data() + e * D;
        const T* ae = A.data() + e * D;
        T acc = 0;
        for (std::size_t d = 0; d < D; ++d) {
          T z = dt * ae[d];
          T ab = ssm_exp(z);
          T bb = dt * em1z(z) * bm[d];
          he[d] = ab * he[d] + bb * xe;
          acc += cm[d] * he[d];
        }
        yr[e] = acc + dskip[e] * xe;
      }
    }
  }

  std::vector<Tensor<T>> parents = {x,     p.A_log, p.w_delta, p.delta_bias,
                                    p.w_B, p.w_C,   p.D_skip};
  return make_op<T>(
      "selective_scan", s, std::move(y), parents,
      [Bn, L, E, D, S, nck, ck](detail::Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& alog_n = *self.parents[1];
        auto& wd_n = *self.parents[2];
        auto& db_n = *self.parents[3];
        auto& wb_n = *self.parents[4];
        auto& wc_n = *self.parents[5];
        auto& ds_n = *self.parents[6];
        std::size_t R = Bn * L;
        const T* xd = xn.data.data();
        const T* g = self.grad.data();

        std::vector<T> dpre, Bm, Cm;
        scan_projections(xd, R, E, D, wd_n.data.data(), db_n.data.data(),
                         wb_n.data.data(), wc_n.data.data(), dpre, Bm, Cm);
        std::vector<T> A = neg_exp(alog_n.data);
        const T* dskip = ds_n.data.data();

        std::vector<T> d_dpre(R * E, T(0)), dBm(R * D, T(0)), dCm(R * D, T(0));
        std::vector<T> dx(R * E, T(0));
        std::vector<T> dA_acc(E * D, T(0)), dDs_acc(E, T(0));
        std::vector<T> h_seg((S + 1) * E * D);
        std::vector<T> dh(E * D);

        for (std::size_t b = 0; b < Bn; ++b) {
          std::fill(dh.begin(), dh.end(), T(0));
          for (std::size_t j = nck; j-- > 0;) {
            std::size_t t0 = j * S;
            std::size_t t1 = std::min(L, t0 + S);
            // recompute states across the segment from the checkpoint
            std::memcpy(h_seg.data(), ck->data() + (b * nck + j) * E * D,
                        E * D * sizeof(T));
            for (std::size_t t = t0; t < t1; ++t) {
              std::size_t row = b * L + t;
              const T* hp = h_seg.data() + (t - t0) * E * D;
              T* hc = h_seg.data() + (t - t0 + 1) * E * D;
              const T* xr = xd + row * E;
              const T* bm = Bm.data() + row * D;
              for (std::size_t e = 0; e < E; ++e) {
                T dt = softplus_val(dpre[row * E + e]);
                T xe = xr[e];
                const T* ae = A.data() + e * D;
                for (std::size_t d = 0; d < D; ++d) {
                  T z = dt * ae[d];
                  T ab = ssm_exp(z);
                  T bb = dt * em1z(z) * bm[d];
                  hc[e * D + d] = ab * hp[e * D + d] + bb * xe;
                }
              }
            }
            // reverse sweep within the segment
            for (std::size_t t = t1; t-- > t0;) {
              std::size_t row = b * L + t;
              const T* hp = h_seg.data() + (t - t0) * E * D;
              const T* hc = h_seg.data() + (t - t0 + 1) * E * D;
              const T* xr = xd + row * E;
              const T* bm = Bm.data() + row * D;
              const T* cm = Cm.data() + row * D;
              const T* gy = g + row * E;
              for (std::size_t e = 0; e < E; ++e) {
                T dt = softplus_val(dpre[row * E + e]);
                T xe = xr[e];
                T gye = gy[e];
                const T* ae = A.data() + e * D;
                T* dhe = dh.data() + e * D;
                T ddelta = 0;
                T dxe = gye * dskip[e];
                dDs_acc[e] += gye * xe;
                for (std::size_t d = 0; d < D; ++d) {
                  T z = dt * ae[d];
                  T ab = ssm_exp(z);
                  T e1 = em1z(z);
                  T bb_per_B = dt * e1;  // B_bar / B
                  T dhd = dhe[d] + gye * cm[d];
                  dCm[row * D + d] += gye * hc[e * D + d];
                  T dab = dhd * hp[e * D + d];
                  T dbb = dhd * xe;
                  dxe += dhd * bb_per_B * bm[d];
                  ddelta += dab * ae[d] * ab + dbb * ab * bm[d];
                  dBm[row * D + d] += dbb * bb_per_B;
                  dA_acc[e * D + d] +=
                      dab * dt * ab + dbb * bm[d] * dt * dt * em1z_deriv(z);
                  dhe[d] = dhd * ab;
                }
                d_dpre[row * E + e] = ddelta * sigmoid(dpre[row * E + e]);
                dx[row * E + e] += dxe;
              }
            }
          }
        }

        if (xn.requires_grad) {
          xn.ensure_grad();
          T* gx = xn.grad.data();
          for (std::size_t i = 0; i < R * E; ++i) gx[i] += dx[i];
          blas::gemm(false, true, R, E, E, T(1), d_dpre.data(), E, wd_n.data.data(), E,
                     T(1), gx, E);
          blas::gemm(false, true, R, E, D, T(1), dBm.data(), D, wb_n.data.data(), D,
                     T(1), gx, E);
          blas::gemm(false, true, R, E, D, T(1), dCm.data(), D, wc_n.data.data(), D,
                     T(1), gx, E);
        }
        if (wd_n.requires_grad) {
          wd_n.ensure_grad();
          blas::gemm(true, false, E, E, R, T(1), xd, E, d_dpre.data(), E, T(1),
                     wd_n.grad.data(), E);
        }
        if (db_n.requires_grad) {
          db_n.ensure_grad();
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t e = 0; e < E; ++e) db_n.grad[e] += d_dpre[r * E + e];
        }
        if (wb_n.requires_grad) {
          wb_n.ensure_grad();
          blas::gemm(true, false, E, D, R, T(1), xd, E, dBm.data(), D, T(1),
                     wb_n.grad.data(), D);
        }
        if (wc_n.requires_grad) {
          wc_n.ensure_grad();
          blas::gemm(true, false, E, D, R, T(1), xd, E, dCm.data(), D, T(1),
                     wc_n.grad.data(), D);
        }
        if (alog_n.requires_grad) {
          alog_n.ensure_grad();
          for (std::size_t i = 0; i < E * D; ++i)
            alog_n.grad[i] += dA_acc[i] * A[i];  // dA/dA_log = -exp(A_log) = A
        }
        if (ds_n.requires_grad) {
          ds_n.ensure_grad();
          for (std::size_t e = 0; e < E; ++e) ds_n.grad[e] += dDs_acc[e];
        }
      });
}

std::vector<std::size_t> scan_order(ScanDirection dir, std::size_t G) {
  std::size_t L = G * G;
  std::vector<std::size_t> order(L);
  switch (dir) {
    case ScanDirection::RowForward:
      for (std::size_t k = 0; k < L; ++k) order[k] = k;
      break;
    case ScanDirection::RowBackward:
      for (std::size_t k = 0; k < L; ++k) order[k] = L - 1 - k;
      break;
    case ScanDirection::ColForward:
      for (std::size_t k = 0; k < L; ++k) order[k] = (k % G) * G + k / G;
      break;
    case ScanDirection::ColBackward:
      for (std::size_t k = 0; k < L; ++k) {
        std::size_t r = L - 1 - k;
        order[k] = (r % G) * G + r / G;
      }
      break;
  }
  return order;
}

std::vector<std::size_t> invert_order(const std::vector<std::size_t>& order) {
  std::vector<std::size_t> inv(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) inv[order[k]] = k;
  return inv;
}

template <class T>
SS2DParams<T> SS2DParams<T>::init(std::size_t E, std::size_t D, Pcg32& rng) {
  SS2DParams<T> p;
  for (auto& d : p.dir) d = SSMParams<T>::init(E, D, rng);
  p.ln_gamma = Tensor<T>::full({E}, T(1), true);
  p.ln_beta = Tensor<T>::zeros({E}, true);
  T k = static_cast<T>(1.0 / std::sqrt(static_cast<double>(E)));
  std::vector<T> w(E * E);
  for (auto& v : w) v = static_cast<T>(rng.uniform(-k, k));
  p.out_w = Tensor<T>::from_data({E, E}, std::move(w), true);
  p.out_b = Tensor<T>::zeros({E}, true);
  return p;
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> SS2DParams<T>::named() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  const char* dn[4] = {"row_fwd", "row_bwd", "col_fwd", "col_bwd"};
  for (std::size_t k = 0; k < 4; ++k)
    for (auto& [n, t] : dir[k].named()) out.emplace_back(std::string(dn[k]) + "." + n, t);
  out.emplace_back("ln_gamma", ln_gamma);
  out.emplace_back("ln_beta", ln_beta);
  out.emplace_back("out_w", out_w);
  out.emplace_back("out_b", out_b);
  return out;
}

template <class T>
Tensor<T> ss2d(const Tensor<T>& x, const SS2DParams<T>& p) {
  const Shape& s = x.shape();
  if (s.size() != 3 && s.size() != 4)
    throw ShapeError("ss2d: expected [G,G,E] or [B,G,G,E], got " + shape_str(s));
  bool batched = s.size() == 4;
  std::size_t B = batched ? s[0] : 1;
  std::size_t G = s[batched ? 1 : 0];
  std::size_t E = s.back();
  if (s[batched ? 2 : 1] != G)
    throw ShapeError("ss2d: non-square token grid " + shape_str(s));

  auto tokens = reshape(x, Shape{B, G * G, E});
  Tensor<T> acc;
  for (int k = 0; k < 4; ++k) {
    auto order = scan_order(static_cast<ScanDirection>(k), G);
    auto xs = reorder_tokens(tokens, order);
    auto ys = selective_scan(xs, p.dir[k]);
    auto back = reorder_tokens(ys, invert_order(order));
    acc = (k == 0) ? back : add(acc, back);
  }
  auto normed = layer_norm(acc, p.ln_gamma, p.ln_beta);
  auto out = linear(normed, p.out_w, p.out_b);
  return reshape(out, s);
}

#define SCT_INSTANTIATE(T)                                                       \
  template struct SSMParams<T>;                                                  \
  template std::pair<Tensor<T>, Tensor<T>> discretize(const Tensor<T>&,          \
                                                      const Tensor<T>&,          \
                                                      const Tensor<T>&);         \
  template Tensor<T> selective_scan(const Tensor<T>&, const SSMParams<T>&);      \
  template struct SS2DParams<T>;                                                 \
  template Tensor<T> ss2d(const Tensor<T>&, const SS2DParams<T>&);

SCT_INSTANTIATE(float)
SCT_INSTANTIATE(double)
#undef SCT_INSTANTIATE

}  // namespace sct
