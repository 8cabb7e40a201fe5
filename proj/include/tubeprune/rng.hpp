#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>

namespace tubeprune {

// Deterministic splittable PRNG. One root seed governs the whole pipeline;
// independent streams are derived by hashing a purpose label into the state,
// so call order in unrelated subsystems cannot perturb each other.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // splitmix64 step
  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Derive an independent stream. Labels must be unique per purpose
  // ("init", "dropout", "data", ...); forking is const and repeatable.
  Rng fork(std::string_view label) const {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (char c : label) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
      h *= 1099511628211ULL;
    }
    Rng child(state_ ^ h ^ 0xA3EC4E3D9F2B157DULL);
    child.next_u64();
    return child;
  }

  Rng fork(std::string_view label, std::uint64_t index) const {
    Rng child = fork(label);
    child.state_ ^= 0xD1B54A32D192ED03ULL * (index + 1);
    child.next_u64();
    return child;
  }

  // uniform in [0, 1), 53-bit mantissa
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller (second draw discarded to keep the
  // stream position independent of call parity)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // unbiased integer in [0, n)
  std::uint64_t index(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[index(i)]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace tubeprune
