#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace mumimo {

using Rng = std::mt19937_64;

// Independent streams are addressed by (seed, stream tag, index). The mixing
// is splitmix64 so neighbouring indices give unrelated engine states.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class Stream : std::uint64_t {
  Init = 1,
  Train = 2,
  Test = 3,
  Baseline = 4,
  Verify = 5,
  Samples = 6,
};

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream))) + index);
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

/// Circularly-symmetric complex Gaussian CN(0, variance): real and imaginary
/// parts are i.i.d. N(0, variance / 2).
class ComplexNormal {
 public:
  std::complex<double> operator()(Rng& rng, double variance = 1.0) {
    const double scale = std::sqrt(variance / 2.0);
    const double re = normal_(rng);
    const double im = normal_(rng);
    return {scale * re, scale * im};
  }

 private:
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mumimo
