#include "sct/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "sct/errors.hpp"
#include "sct/rng.hpp"

namespace sct {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Blob {
  double cx, cy, amp, sigma;
};

}  // namespace

PhantomPair gen_phantom_pair(const PhantomConfig& cfg) {
  if (cfg.size < 16 || cfg.size % 2 != 0)
    throw ConfigError("phantom size must be even and at least 16");
  if (cfg.shading < 0 || cfg.streaks < 0 || cfg.noise < 0 || cfg.drift < 0)
    throw ConfigError("artifact strengths must be non-negative");

  const std::size_t n = cfg.size;
  const double ax = 0.36, ay = 0.44;       // head semi-axes, normalized units
  const double skull_inner = 0.88;         // interior / skull boundary

  // anatomy: seeded tissue blobs and a skull intensity ripple phase
  Pcg32 arng(derive_seed(cfg.seed, 1), 11);
  std::vector<Blob> blobs(6);
  for (auto& b : blobs) {
    do {
      b.cx = arng.uniform(-ax, ax);
      b.cy = arng.uniform(-ay, ay);
    } while (std::sqrt((b.cx / ax) * (b.cx / ax) + (b.cy / ay) * (b.cy / ay)) >
             0.7 * skull_inner);
    b.amp = arng.uniform(-20.0, 20.0);
    b.sigma = arng.uniform(0.04, 0.10);
  }
  double skull_phase = arng.uniform(0.0, 2.0 * kPi);

  PhantomPair out;
  out.ct.dims = {n, n};
  out.ct.voxels.resize(n * n);
  out.labels.assign(n * n, kLabelAir);

  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double cy = (double(y) + 0.5) / double(n) - 0.5;
      double cx = (double(x) + 0.5) / double(n) - 0.5;
      double re = std::sqrt((cx / ax) * (cx / ax) + (cy / ay) * (cy / ay));
      double hu = -1000.0;
      std::uint8_t label = kLabelAir;
      if (re <= 1.0) {
        if (re > skull_inner) {
          double ang = std::atan2(cy, cx);
          hu = 1000.0 + 60.0 * std::sin(6.0 * ang + skull_phase);
          label = kLabelBone;
        } else {
          double v = 30.0;
          for (const auto& b : blobs) {
            double dx = cx - b.cx, dy = cy - b.cy;
            v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
          }
          // paired low-intensity ventricle shapes near the center
          for (double side : {-1.0, 1.0}) {
            double dx = (cx - side * 0.07) / 0.035;
            double dy = (cy + 0.05) / 0.09;
            if (dx * dx + dy * dy <= 1.0) v = 8.0;
          }
          hu = std::clamp(v, 0.0, 60.0);
          label = kLabelSoft;
        }
      }
      out.ct.voxels[y * n + x] = static_cast<float>(hu);
      out.labels[y * n + x] = label;
    }

  out.cbct = out.ct;
  bool touched = false;

  if (cfg.shading > 0) {
    Pcg32 rng(derive_seed(cfg.seed, 2), 22);
    double kx = 1.0 + rng.below(2), ky = 1.0 + rng.below(2);
    double px = rng.uniform(0.0, 2.0 * kPi), py = rng.uniform(0.0, 2.0 * kPi);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        double cy = (double(y) + 0.5) / double(n) - 0.5;
        double cx = (double(x) + 0.5) / double(n) - 0.5;
        double f = std::sin(2.0 * kPi * kx * cx + px) *
                   std::sin(2.0 * kPi * ky * cy + py);
        double hu = out.cbct.voxels[y * n + x];
        out.cbct.voxels[y * n + x] =
            static_cast<float>((hu + 1000.0) * (1.0 + cfg.shading * f) - 1000.0);
      }
    touched = true;
  }

  if (cfg.streaks > 0) {
    Pcg32 rng(derive_seed(cfg.seed, 3), 33);
    const int nstreaks = 10;
    const double width = 0.012;  // angular half-width, radians
    std::vector<double> theta(nstreaks), amp(nstreaks);
    for (int k = 0; k < nstreaks; ++k) {
      theta[k] = rng.uniform(-kPi, kPi);
      amp[k] = cfg.streaks * rng.uniform(0.5, 1.0) * (rng.below(2) ? 1.0 : -1.0);
    }
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        double cy = (double(y) + 0.5) / double(n) - 0.5;
        double cx = (double(x) + 0.5) / double(n) - 0.5;
        double r = std::sqrt(cx * cx + cy * cy);
        double ang = std::atan2(cy, cx);
        double add = 0.0;
        for (int k = 0; k < nstreaks; ++k) {
          double d = ang - theta[k];
          while (d > kPi) d -= 2.0 * kPi;
          while (d < -kPi) d += 2.0 * kPi;
          add += amp[k] * std::exp(-0.5 * (d / width) * (d / width));
        }
        out.cbct.voxels[y * n + x] += static_cast<float>(add * (r / 0.5));
      }
    touched = true;
  }

  if (cfg.drift > 0) {
    Pcg32 rng(derive_seed(cfg.seed, 4), 44);
    double scale = 1.0 + cfg.drift * rng.uniform(-1.0, 1.0);
    double offset = 100.0 * cfg.drift * rng.uniform(-1.0, 1.0);
    for (auto& v : out.cbct.voxels)
      v = static_cast<float>((v + 1000.0) * scale - 1000.0 + offset);
    touched = true;
  }

  if (cfg.noise > 0) {
    Pcg32 rng(derive_seed(cfg.seed, 5), 55);
    for (auto& v : out.cbct.voxels)
      v += static_cast<float>(cfg.noise * rng.normal());
    touched = true;
  }

  if (touched)
    for (auto& v : out.cbct.voxels) v = std::clamp(v, -1024.0f, 3000.0f);
  return out;
}

}  // namespace sct
