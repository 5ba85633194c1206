#pragma once

// Central finite-difference gradient checking, double precision only.
// Relative error uses max(1, |analytic|, |numeric|) as the denominator so
// near-zero gradients are judged on absolute error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "sct/rng.hpp"
#include "sct/tensor.hpp"

namespace fd {

using sct::TensorD;

struct Report {
  double max_rel_err = 0.0;
  std::size_t bad_input = 0;   // index of the worst input tensor
  std::size_t bad_elem = 0;    // flat element index within it
  double analytic = 0.0;
  double numeric = 0.0;
};

using GraphFn = std::function<TensorD(std::vector<TensorD>&)>;

// Runs one backward pass, then perturbs every element of every
// requires_grad input by +-h and compares.
inline Report check(const GraphFn& f, std::vector<TensorD> inputs, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  TensorD loss = f(inputs);
  loss.backward();

  std::vector<std::vector<double>> analytic(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k)
    if (inputs[k].requires_grad())
      analytic[k] = inputs[k].has_grad() ? inputs[k].grad()
                                         : std::vector<double>(inputs[k].numel(), 0.0);

  Report rep;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!inputs[k].requires_grad()) continue;
    auto& vals = inputs[k].data();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      double keep = vals[i];
      vals[i] = keep + h;
      double up = f(inputs).item();
      vals[i] = keep - h;
      double dn = f(inputs).item();
      vals[i] = keep;
      double num = (up - dn) / (2.0 * h);
      double ana = analytic[k][i];
      double rel = std::abs(ana - num) /
                   std::max({1.0, std::abs(ana), std::abs(num)});
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.bad_input = k;
        rep.bad_elem = i;
        rep.analytic = ana;
        rep.numeric = num;
      }
    }
  }
  return rep;
}

// Like check(), but probes at most `per_tensor` seeded random elements of each
// input. Keeps large end-to-end graphs inside a test-time budget.
inline Report check_sampled(const GraphFn& f, std::vector<TensorD> inputs,
                            std::size_t per_tensor, std::uint64_t seed,
                            double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  TensorD loss = f(inputs);
  loss.backward();

  std::vector<std::vector<double>> analytic(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k)
    if (inputs[k].requires_grad())
      analytic[k] = inputs[k].has_grad() ? inputs[k].grad()
                                         : std::vector<double>(inputs[k].numel(), 0.0);

  sct::Pcg32 rng(seed, 0x5a3c);
  Report rep;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!inputs[k].requires_grad()) continue;
    auto& vals = inputs[k].data();
    std::vector<std::size_t> idx(vals.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::size_t take = std::min(per_tensor, idx.size());
    for (std::size_t i = 0; i < take; ++i)
      std::swap(idx[i], idx[i + rng.below(static_cast<std::uint32_t>(idx.size() - i))]);
    for (std::size_t s = 0; s < take; ++s) {
      std::size_t i = idx[s];
      double keep = vals[i];
      vals[i] = keep + h;
      double up = f(inputs).item();
      vals[i] = keep - h;
      double dn = f(inputs).item();
      vals[i] = keep;
      double num = (up - dn) / (2.0 * h);
      double ana = analytic[k][i];
      double rel = std::abs(ana - num) /
                   std::max({1.0, std::abs(ana), std::abs(num)});
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.bad_input = k;
        rep.bad_elem = i;
        rep.analytic = ana;
        rep.numeric = num;
      }
    }
  }
  return rep;
}

inline std::string describe(const Report& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "max_rel_err=%.3e at input %zu[%zu] analytic=%.6g numeric=%.6g",
                r.max_rel_err, r.bad_input, r.bad_elem, r.analytic, r.numeric);
  return buf;
}

}  // namespace fd
