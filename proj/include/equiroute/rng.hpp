#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace equiroute {

/// Counter-based SplitMix64 generator.
///
/// The n-th output (n = 1, 2, ...) is mix(seed + n * 0x9E3779B97F4A7C15) with the
/// standard SplitMix64 finalizer, so streams are reproducible across
/// implementations for a fixed seed. Gaussian draws use the Box-Muller transform
/// on two consecutive uniforms and return the cosine branch first, then the
/// cached sine branch.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Seed for an independent sub-stream, e.g. one per purpose or per sigma.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound); bound > 0. Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound);

  double gaussian();
  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  /// Fisher-Yates shuffle driven by below().
  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& values) {
    shuffle(std::span<T>(values));
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace equiroute
