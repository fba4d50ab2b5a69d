#pragma once

#include <cmath>
#include <cstdint>

namespace ntsf {

// Counter-style RNG built on splitmix64. A generator is fully determined by
// the key it was derived from, so every random decision in the pipeline can
// be keyed by (seed, stream, epoch, batch) and replayed exactly.
class Rng {
 public:
  // Stream tags keep independent uses of the same seed decorrelated.
  enum Stream : uint64_t {
    kInit = 1,
    kSplit = 2,
    kMasking = 3,
    kBatchOrder = 4,
    kDropout = 5,
    kDataGen = 6,
    kGradCheck = 7,
    kTest = 8,
  };

  explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x243f6a8885a308d3ull)) {}

  static Rng keyed(uint64_t seed, uint64_t stream, uint64_t a = 0, uint64_t b = 0) {
    uint64_t s = mix(seed + 0x9e3779b97f4a7c15ull);
    s = mix(s ^ stream);
    s = mix(s ^ a);
    s = mix(s ^ b);
    return Rng(FromState{}, s);
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // Box-Muller; 1-u keeps the log argument away from zero.
    double u = 1.0 - uniform();
    double v = uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    double a = 6.283185307179586476925286766559 * v;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Resampled until |z| <= cutoff (in units of sigma).
  double truncated_normal(double sigma, double cutoff = 2.0) {
    double z = normal();
    while (std::fabs(z) > cutoff) z = normal();
    return z * sigma;
  }

  // Unbiased integer in [0, n).
  uint64_t below(uint64_t n) {
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  template <typename Vec>
  void shuffle(Vec& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  struct FromState {};
  Rng(FromState, uint64_t s) : state_(s) {}

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ntsf
