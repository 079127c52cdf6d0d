#pragma once

#include <cmath>
#include <cstdint>

namespace gridball {

// Deterministic random stream (splitmix64). The <random> distributions are
// implementation-defined, so every draw that has to reproduce bit-identically
// across toolchains goes through this class instead.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t NextU64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double Uniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Uniform integer in [0, n); requires n > 0.
  int UniformInt(int n) {
    return static_cast<int>(NextU64() % static_cast<uint64_t>(n));
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  // Standard normal via Box-Muller.
  double Gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = Uniform();
    } while (u1 <= 0.0);
    const double u2 = Uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream seed from a base seed and a stream tag.
inline uint64_t DeriveSeed(uint64_t base, uint64_t tag) {
  Rng r(base ^ (0x9e3779b97f4a7c15ull * (tag + 1)));
  return r.NextU64();
}

inline uint64_t DeriveSeed(uint64_t base, uint64_t a, uint64_t b) {
  return DeriveSeed(DeriveSeed(base, a), b);
}

}  // namespace gridball
