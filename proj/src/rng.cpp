#include "sct/rng.hpp"

#include <cmath>

namespace sct {

double Pcg32::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on two uniforms; u1 is kept away from 0 so log() is finite.
  double u1 = (next_u32() + 1.0) * (1.0 / 4294967297.0);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_tag) {
  std::uint64_t s = seed ^ (0xa0761d6478bd642fULL + stream_tag * 0xe7037ed1a0b428dbULL);
  return splitmix64(s);
}

}  // namespace sct
