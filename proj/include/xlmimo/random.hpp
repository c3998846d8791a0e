#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace xlmimo {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; used only to decorrelate seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Purposes that draw from independent stream families under one master seed.
enum class Stream : std::uint64_t {
  trial = 1,
  calibration = 2,
  detection = 3,
  test = 4,
};

/// Independent generator for (master seed, purpose, index). Results never
/// depend on which thread runs the index or in what order.
inline Rng make_stream(std::uint64_t master, Stream purpose, std::uint64_t index) {
  const std::uint64_t a = mix64(master ^ mix64(static_cast<std::uint64_t>(purpose)));
  const std::uint64_t b = mix64(a ^ mix64(index + 0x632BE59BD9B4E019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32)};
  return Rng(seq);
}

/// Circularly-symmetric complex Gaussian CN(0, variance).
inline std::complex<double> complex_normal(Rng& rng, double variance) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double s = std::sqrt(variance / 2.0);
  const double re = n(rng);
  const double im = n(rng);
  return {s * re, s * im};
}

}  // namespace xlmimo
