#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace sct {

// Boolean masks derived from a reference CT slice (HU space).
// full_body: HU > -500, reduced to the largest connected component with
// interior holes filled. soft_tissue / bone: HU range tests inside the body.
struct RegionMasks {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> full_body;
  std::vector<std::uint8_t> soft_tissue;  // -250 <= HU <= 250
  std::vector<std::uint8_t> bone;         // 250 < HU <= 3000
};

// EvalError when the body mask comes out empty (all-air input).
RegionMasks region_masks_from_ct(const std::vector<double>& ct_hu, std::size_t h,
                                 std::size_t w);

// SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, data
// range 2.0. Local statistics use every pixel (kernel renormalized at image
// borders); the per-pixel map is averaged over mask pixels only.
double masked_ssim(const std::vector<double>& p, const std::vector<double>& y,
                   const std::vector<std::uint8_t>& mask, std::size_t h,
                   std::size_t w);

// 10*log10(R^2 / MSE) with R=2.0, MSE over mask pixels; +inf when identical.
double masked_psnr(const std::vector<double>& p, const std::vector<double>& y,
                   const std::vector<std::uint8_t>& mask);

struct RegionScore {
  double ssim = 0.0;
  double psnr = 0.0;
  std::size_t voxels = 0;
};

struct MetricsReport {
  RegionScore full, soft, bone;
  double mae_hu = 0.0;     // body-masked mean absolute error, HU
  std::size_t slices = 0;  // slices that contributed (non-empty body)
};

// pred/ref are same-shape HU volumes [slices, h, w]. Masks come from ref;
// metrics run per slice in normalized intensity space and average over
// slices whose mask is non-empty. EvalError when every slice is bodiless.
MetricsReport evaluate_pair(const std::vector<double>& pred_hu,
                            const std::vector<double>& ref_hu, std::size_t slices,
                            std::size_t h, std::size_t w);

// Aligned text table: one row per labelled report, SSIM% and PSNR columns
// for the full / soft-tissue / bone regions.
std::string format_metrics_table(
    const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace sct
