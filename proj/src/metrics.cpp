#include "sct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "sct/errors.hpp"
#include "sct/losses.hpp"

namespace sct {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kRange = 2.0;
constexpr double kC1 = (0.01 * kRange) * (0.01 * kRange);
constexpr double kC2 = (0.03 * kRange) * (0.03 * kRange);

const std::vector<double>& gauss_kernel() {
  static const std::vector<double> k = [] {
    std::vector<double> g(kWin);
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
      double d = i - (kWin - 1) / 2.0;
      g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      sum += g[i];
    }
    for (auto& v : g) v /= sum;
    return g;
  }();
  return k;
}

// Separable Gaussian blur; the kernel is renormalized where it overhangs the
// image so border statistics stay unbiased.
std::vector<double> gauss_filter(const std::vector<double>& img, std::size_t h,
                                 std::size_t w) {
  const auto& g = gauss_kernel();
  const int r = kWin / 2;
  std::vector<double> tmp(h * w), out(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0, wsum = 0.0;
      for (int d = -r; d <= r; ++d) {
        auto xi = static_cast<long>(x) + d;
        if (xi < 0 || xi >= static_cast<long>(w)) continue;
        acc += g[d + r] * img[y * w + xi];
        wsum += g[d + r];
      }
      tmp[y * w + x] = acc / wsum;
    }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0, wsum = 0.0;
      for (int d = -r; d <= r; ++d) {
        auto yi = static_cast<long>(y) + d;
        if (yi < 0 || yi >= static_cast<long>(h)) continue;
        acc += g[d + r] * tmp[yi * w + x];
        wsum += g[d + r];
      }
      out[y * w + x] = acc / wsum;
    }
  return out;
}

// Largest 4-connected component of `in`, found with an explicit stack.
std::vector<std::uint8_t> largest_component(const std::vector<std::uint8_t>& in,
                                            std::size_t h, std::size_t w) {
  std::vector<int> label(h * w, -1);
  std::vector<std::size_t> stack, sizes;
  int next = 0;
  for (std::size_t s = 0; s < h * w; ++s) {
    if (!in[s] || label[s] >= 0) continue;
    std::size_t count = 0;
    stack.push_back(s);
    label[s] = next;
    while (!stack.empty()) {
      std::size_t i = stack.back();
      stack.pop_back();
      ++count;
      std::size_t y = i / w, x = i % w;
      auto visit = [&](std::size_t j) {
        if (in[j] && label[j] < 0) {
          label[j] = next;
          stack.push_back(j);
        }
      };
      if (y > 0) visit(i - w);
      if (y + 1 < h) visit(i + w);
      if (x > 0) visit(i - 1);
      if (x + 1 < w) visit(i + 1);
    }
    sizes.push_back(count);
    ++next;
  }
  std::vector<std::uint8_t> out(h * w, 0);
  if (sizes.empty()) return out;
  int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) -
                              sizes.begin());
  for (std::size_t i = 0; i < h * w; ++i) out[i] = label[i] == best ? 1 : 0;
  return out;
}

// Background pixels unreachable from the border are interior holes.
void fill_holes(std::vector<std::uint8_t>& body, std::size_t h, std::size_t w) {
  std::vector<std::uint8_t> outside(h * w, 0);
  std::vector<std::size_t> stack;
  auto seed = [&](std::size_t i) {
    if (!body[i] && !outside[i]) {
      outside[i] = 1;
      stack.push_back(i);
    }
  };
  for (std::size_t x = 0; x < w; ++x) {
    seed(x);
    seed((h - 1) * w + x);
  }
  for (std::size_t y = 0; y < h; ++y) {
    seed(y * w);
    seed(y * w + w - 1);
  }
  while (!stack.empty()) {
    std::size_t i = stack.back();
    stack.pop_back();
    std::size_t y = i / w, x = i % w;
    if (y > 0) seed(i - w);
    if (y + 1 < h) seed(i + w);
    if (x > 0) seed(i - 1);
    if (x + 1 < w) seed(i + 1);
  }
  for (std::size_t i = 0; i < h * w; ++i)
    if (!body[i] && !outside[i]) body[i] = 1;
}

}  // namespace

RegionMasks region_masks_from_ct(const std::vector<double>& ct_hu, std::size_t h,
                                 std::size_t w) {
  if (ct_hu.size() != h * w)
    throw ShapeError("region masks: buffer size does not match " +
                     std::to_string(h) + "x" + std::to_string(w));
  RegionMasks m;
  m.h = h;
  m.w = w;
  std::vector<std::uint8_t> thresh(h * w);
  for (std::size_t i = 0; i < h * w; ++i) thresh[i] = ct_hu[i] > -500.0 ? 1 : 0;
  m.full_body = largest_component(thresh, h, w);
  fill_holes(m.full_body, h, w);
  if (std::find(m.full_body.begin(), m.full_body.end(), 1) == m.full_body.end())
    throw EvalError("empty body mask (all-air reference)");

  m.soft_tissue.assign(h * w, 0);
  m.bone.assign(h * w, 0);
  for (std::size_t i = 0; i < h * w; ++i) {
    if (!m.full_body[i]) continue;
    if (ct_hu[i] >= -250.0 && ct_hu[i] <= 250.0) m.soft_tissue[i] = 1;
    if (ct_hu[i] > 250.0 && ct_hu[i] <= 3000.0) m.bone[i] = 1;
  }
  return m;
}

double masked_ssim(const std::vector<double>& p, const std::vector<double>& y,
                   const std::vector<std::uint8_t>& mask, std::size_t h,
                   std::size_t w) {
  if (p.size() != h * w || y.size() != h * w || mask.size() != h * w)
    throw ShapeError("masked_ssim: buffer sizes disagree");
  std::vector<double> pp(h * w), yy(h * w), py(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    pp[i] = p[i] * p[i];
    yy[i] = y[i] * y[i];
    py[i] = p[i] * y[i];
  }
  auto mu_p = gauss_filter(p, h, w);
  auto mu_y = gauss_filter(y, h, w);
  auto e_pp = gauss_filter(pp, h, w);
  auto e_yy = gauss_filter(yy, h, w);
  auto e_py = gauss_filter(py, h, w);

  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (!mask[i]) continue;
    // the formula is symmetric in (p, y); sorting the operands first makes
    // the evaluation order fixed, so fused multiply-adds cannot introduce
    // an argument-order dependence and ssim(p,y) == ssim(y,p) bit-exactly
    double mp = mu_p[i], my = mu_y[i];
    double ep = e_pp[i], ey = e_yy[i];
    if (my < mp || (my == mp && ey < ep)) {
      std::swap(mp, my);
      std::swap(ep, ey);
    }
    double var_p = ep - mp * mp;
    double var_y = ey - my * my;
    double cov = e_py[i] - mp * my;
    double num = (2.0 * mp * my + kC1) * (2.0 * cov + kC2);
    double den = (mp * mp + my * my + kC1) * (var_p + var_y + kC2);
    acc += num / den;
    ++n;
  }
  if (n == 0) throw EvalError("masked_ssim: empty mask");
  return acc / static_cast<double>(n);
}

double masked_psnr(const std::vector<double>& p, const std::vector<double>& y,
                   const std::vector<std::uint8_t>& mask) {
  if (p.size() != y.size() || p.size() != mask.size())
    throw ShapeError("masked_psnr: buffer sizes disagree");
  double mse = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask[i]) continue;
    double d = p[i] - y[i];
    mse += d * d;
    ++n;
  }
  if (n == 0) throw EvalError("masked_psnr: empty mask");
  mse /= static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(kRange * kRange / mse);
}

MetricsReport evaluate_pair(const std::vector<double>& pred_hu,
                            const std::vector<double>& ref_hu, std::size_t slices,
                            std::size_t h, std::size_t w) {
  if (slices == 0 || pred_hu.size() != slices * h * w ||
      ref_hu.size() != pred_hu.size())
    throw ShapeError("evaluate_pair: volumes must share shape [slices,h,w]");

  MetricsReport rep;
  std::size_t soft_slices = 0, bone_slices = 0;
  double mae_sum = 0.0;
  std::size_t mae_n = 0;

  for (std::size_t s = 0; s < slices; ++s) {
    std::vector<double> pr(pred_hu.begin() + s * h * w,
                           pred_hu.begin() + (s + 1) * h * w);
    std::vector<double> rf(ref_hu.begin() + s * h * w,
                           ref_hu.begin() + (s + 1) * h * w);
    RegionMasks m;
    try {
      m = region_masks_from_ct(rf, h, w);
    } catch (const EvalError&) {
      continue;  // bodiless slice; skip
    }
    std::vector<double> pn(h * w), rn(h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
      pn[i] = hu_to_norm(pr[i]);
      rn[i] = hu_to_norm(rf[i]);
      if (m.full_body[i]) {
        mae_sum += std::abs(std::clamp(pr[i], -1024.0, 3000.0) -
                            std::clamp(rf[i], -1024.0, 3000.0));
        ++mae_n;
      }
    }
    ++rep.slices;
    auto count = [](const std::vector<std::uint8_t>& v) {
      return static_cast<std::size_t>(std::count(v.begin(), v.end(), 1));
    };
    rep.full.ssim += masked_ssim(pn, rn, m.full_body, h, w);
    rep.full.psnr += masked_psnr(pn, rn, m.full_body);
    rep.full.voxels += count(m.full_body);
    if (count(m.soft_tissue) > 0) {
      rep.soft.ssim += masked_ssim(pn, rn, m.soft_tissue, h, w);
      rep.soft.psnr += masked_psnr(pn, rn, m.soft_tissue);
      rep.soft.voxels += count(m.soft_tissue);
      ++soft_slices;
    }
    if (count(m.bone) > 0) {
      rep.bone.ssim += masked_ssim(pn, rn, m.bone, h, w);
      rep.bone.psnr += masked_psnr(pn, rn, m.bone);
      rep.bone.voxels += count(m.bone);
      ++bone_slices;
    }
  }
  if (rep.slices == 0) throw EvalError("evaluate_pair: no slice has a body");

  rep.full.ssim /= static_cast<double>(rep.slices);
  rep.full.psnr /= static_cast<double>(rep.slices);
  if (soft_slices) {
    rep.soft.ssim /= static_cast<double>(soft_slices);
    rep.soft.psnr /= static_cast<double>(soft_slices);
  }
  if (bone_slices) {
    rep.bone.ssim /= static_cast<double>(bone_slices);
    rep.bone.psnr /= static_cast<double>(bone_slices);
  }
  if (mae_n) rep.mae_hu = mae_sum / static_cast<double>(mae_n);
  return rep;
}

std::string format_metrics_table(
    const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  auto num = [](double v, bool percent) {
    char buf[32];
    if (!std::isfinite(v))
      std::snprintf(buf, sizeof(buf), "%8s", "inf");
    else
      std::snprintf(buf, sizeof(buf), "%8.2f", percent ? 100.0 * v : v);
    return std::string(buf);
  };
  std::string out;
  char head[128];
  std::snprintf(head, sizeof(head), "%-16s %25s  %25s\n", "model",
                "SSIM(%) full/ST/bone", "PSNR(dB) full/ST/bone");
  out += head;
  for (const auto& [label, r] : rows) {
    char lbl[64];
    std::snprintf(lbl, sizeof(lbl), "%-16s", label.c_str());
    out += lbl;
    out += num(r.full.ssim, true) + num(r.soft.ssim, true) + num(r.bone.ssim, true);
    out += " ";
    out += num(r.full.psnr, false) + num(r.soft.psnr, false) + num(r.bone.psnr, false);
    out += "\n";
  }
  return out;
}

}  // namespace sct
