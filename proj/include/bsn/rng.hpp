#pragma once

#include <cmath>
#include <cstdint>

namespace bsn::rng {

/// Mixes a 64-bit value through the SplitMix64 finalizer (Stafford variant 13).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and a stream index.
/// Two rounds of the finalizer decorrelate seeds that differ in a few bits.
inline std::uint64_t derive_stream(std::uint64_t base_seed, std::uint64_t stream) {
  return mix64(mix64(base_seed) ^ mix64(0xD1B54A32D192ED03ULL + stream));
}

/// SplitMix64 generator with explicitly specified uniform and normal
/// transformations so sequences are identical across platforms and compilers
/// (std::normal_distribution is implementation-defined and is avoided).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53 random mantissa bits.
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (lo, hi).
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_uniform(); }

  /// Standard normal via the Marsaglia polar method (pairs cached).
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_uniform() - 1.0;
      v = 2.0 * next_uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  /// Child generator for an independent substream.
  SplitMix64 split(std::uint64_t stream) const { return SplitMix64(derive_stream(state_, stream)); }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Generator for repetition `stream` of a run keyed by `base_seed`.
inline SplitMix64 substream(std::uint64_t base_seed, std::uint64_t stream) {
  return SplitMix64(derive_stream(base_seed, stream));
}

}  // namespace bsn::rng
