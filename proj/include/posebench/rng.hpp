#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "posebench/errors.hpp"

namespace posebench {

// splitmix64 finalizer; a strong 64-bit mix used to derive independent
// per-sample seeds from (root seed, index) pairs.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

// Deterministic random source. The core generator is std::mt19937_64, whose
// output sequence is fixed by the standard; the distribution transforms are
// implemented here because the std:: distribution objects are not guaranteed
// to produce identical streams across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw DegenerateInput("uniform_index: n must be positive");
    const std::uint64_t reject_from = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
    std::uint64_t x = gen_();
    while (x > reject_from) x = gen_();
    return x % n;
  }

  // Standard normal via Box-Muller. Always consumes exactly two generator
  // outputs (no cached second value), so draw counts stay predictable.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]; keeps the log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace posebench
