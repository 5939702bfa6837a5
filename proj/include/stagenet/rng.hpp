#ifndef STAGENET_RNG_HPP
#define STAGENET_RNG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace stagenet {

// Deterministic random source. All distribution transforms are implemented
// here rather than with std:: distributions, whose output is
// implementation-defined; this keeps every seeded run bit-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller (no cached spare, for simplicity).
  double normal() {
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // Derive an independent child seed from a label. Used so that per-subject
  // or per-epoch streams do not depend on generation order.
  static std::uint64_t derive(std::uint64_t seed, const std::string& label) {
    // FNV-1a over the label, mixed with the parent seed via splitmix64.
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : label) {
      h ^= c;
      h *= 1099511628211ull;
    }
    std::uint64_t z = seed ^ h;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace stagenet

#endif  // STAGENET_RNG_HPP
