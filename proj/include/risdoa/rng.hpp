#pragma once

// Deterministic counter-based random streams. Streams are derived from a
// seed plus integer tags, so any (seed, tag...) combination names the same
// sequence on every platform and under any thread schedule. Gaussian draws
// use Box-Muller instead of std::normal_distribution, whose output is
// implementation-defined.

#include <cmath>
#include <complex>
#include <cstdint>

namespace risdoa {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Hash-chains integer tags onto a seed to name an independent stream.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed) { return seed; }

template <typename... Tags>
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, Tags... rest) {
  return derive_seed(splitmix64(seed ^ splitmix64(tag + 0x51ed270b0a429aadULL)), rest...);
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(splitmix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n > 0 ? next_u64() % n : 0; }

  std::pair<double, double> normal_pair() {
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double a = 2.0 * 3.14159265358979323846 * uniform();
    return {r * std::cos(a), r * std::sin(a)};
  }

  // Circularly-symmetric complex Gaussian with E|z|^2 = variance.
  std::complex<double> complex_gaussian(double variance) {
    const auto [re, im] = normal_pair();
    const double s = std::sqrt(variance / 2.0);
    return {s * re, s * im};
  }

 private:
  std::uint64_t state_;
};

}  // namespace risdoa
