// Counter-free deterministic RNG: splitmix64 seeding + xoshiro256** engine,
// with explicit bit-level mappings to doubles so streams are reproducible
// across platforms and standard-library versions.

#pragma once

#include <cmath>
#include <cstdint>

namespace cmlab {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Stable mix of a base seed and a stream index (per-sample streams, worker
// seeds). Equal inputs give equal streams on every platform.
inline uint64_t hash_seed(uint64_t seed, uint64_t stream) {
  uint64_t s = seed ^ (0x9E3779B97F4A7C15ull + (stream << 1));
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
    have_gauss_ = false;
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in (0, 1) - safe for log()
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t below(uint64_t n) {
    // multiply-shift; bias is negligible for n << 2^64 and irrelevant here
    const unsigned __int128 prod =
        static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<uint64_t>(prod >> 64);
  }

  // standard normal via Box-Muller (deterministic draw order)
  double normal() {
    if (have_gauss_) {
      have_gauss_ = false;
      return gauss_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    gauss_ = r * std::sin(a);
    have_gauss_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // standard Gumbel: -log(-log(U)), U in (0,1)
  double gumbel() { return -std::log(-std::log(uniform_open())); }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4];
  double gauss_ = 0.0;
  bool have_gauss_ = false;
};

}  // namespace cmlab
