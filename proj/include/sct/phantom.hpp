#pragma once

#include <cstdint>
#include <vector>

#include "sct/volume.hpp"

namespace sct {

// Seeded synthetic head slice: clean CT plus a degraded CBCT-like copy.
// All artifact strengths may be zero, in which case cbct == ct bit-exactly.
struct PhantomConfig {
  std::size_t size = 256;  // square slice side, even
  std::uint64_t seed = 0;
  double shading = 0.10;  // low-frequency multiplicative field amplitude
  double streaks = 60.0;  // angular streak amplitude, HU
  double noise = 25.0;    // additive Gaussian sigma, HU
  double drift = 0.06;    // global intensity scale/offset drift fraction
};

enum : std::uint8_t { kLabelAir = 0, kLabelSoft = 1, kLabelBone = 2 };

struct PhantomPair {
  Volume ct;
  Volume cbct;
  std::vector<std::uint8_t> labels;  // per voxel, aligned with ct
};

// Pure function of the config: same config -> bit-identical outputs.
PhantomPair gen_phantom_pair(const PhantomConfig& cfg);

}  // namespace sct
