#pragma once

#include <cmath>
#include <complex>
#include <cstdint>

namespace pcattn {

// splitmix64: used both as a seed mixer and as the engine behind Rng.
// Keeps sample streams independent of the platform's std <random> internals,
// so identical seeds give identical bytes everywhere.
inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derives a stream seed from (run seed, stream id, index).
inline uint64_t mix_seed(uint64_t seed, uint64_t stream, uint64_t index) {
  uint64_t s = seed;
  uint64_t a = splitmix64(s);
  s ^= stream * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull;
  uint64_t b = splitmix64(s);
  s ^= index + 0x632be59bd9b4e019ull;
  uint64_t c = splitmix64(s);
  return a ^ (b << 1) ^ c;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ^ 0x1fe6a4b1d3c8200full) {
    // warm up so low-entropy seeds decorrelate
    for (int i = 0; i < 4; ++i) splitmix64(state_);
  }

  uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  int64_t uniform_int(int64_t n) {
    // rejection sampling to avoid modulo bias
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<int64_t>(x % un);
  }

  // standard normal via Box-Muller (no cached spare: keeps the stream
  // position a pure function of the call count)
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::complex<double> complex_normal(double component_stddev) {
    const double re = normal(0.0, component_stddev);
    const double im = normal(0.0, component_stddev);
    return {re, im};
  }

 private:
  uint64_t state_;
};

}  // namespace pcattn
