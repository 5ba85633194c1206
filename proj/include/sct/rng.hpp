#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace sct {

// splitmix64 (Steele et al.), used to derive decorrelated stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// PCG32 (O'Neill, pcg-random.org, XSH-RR 64/32). Fully specified arithmetic,
// so sequences are identical on every platform for a given (seed, stream).
class Pcg32 {
 public:
  explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0) {
    state_ = 0;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  // Uniform in [0, 1) with 32 bits of resolution.
  double uniform() { return next_u32() * (1.0 / 4294967296.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, bound) via Lemire-style rejection.
  std::uint32_t below(std::uint32_t bound) {
    std::uint32_t threshold = (-bound) % bound;
    for (;;) {
      std::uint32_t r = next_u32();
      if (r >= threshold) return r % bound;
    }
  }

  // Standard normal via Box-Muller; caches the second variate.
  double normal();

  // Fisher-Yates shuffle, deterministic for a fixed generator state.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(static_cast<std::uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 1;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives a child seed for a named sub-stream of a run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_tag);

}  // namespace sct
