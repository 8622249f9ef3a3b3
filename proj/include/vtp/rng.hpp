#pragma once

// Reproducible random streams. SplitMix64 is the single generator used
// everywhere so results are bit-identical across runs and platforms
// (std::uniform_real_distribution is implementation-defined and avoided).

#include <cmath>
#include <cstdint>
#include <string_view>

namespace vtp::rng {

// FNV-1a, used for content digests and name-derived seeds.
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Sub-seed for item i of a seeded collection (episode seeds, per-variant
// training seeds). Documented mixing function: splitmix64 over seed xor a
// golden-ratio multiple of the index.
inline uint64_t mix_seed(uint64_t seed, uint64_t index) {
  return splitmix64(seed ^ (0x9e3779b97f4a7c15ull * (index + 1)));
}

class Stream {
 public:
  explicit Stream(uint64_t seed) : state_(splitmix64(seed)) {}

  uint64_t next_u64() {
    state_ = state_ * 6364136223846793005ull + 1442695040888963407ull;
    return splitmix64(state_);
  }

  // uniform in [0,1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; consumes two uniforms per pair
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // integer in [0, n)
  uint64_t below(uint64_t n) { return next_u64() % n; }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace vtp::rng
