#pragma once

#include <cstdint>
#include <random>

namespace tpap {

/// Deterministic, splittable random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. All conversions to floats and bounded integers are done here
/// rather than through <random> distributions, whose algorithms are
/// implementation-defined, so streams are identical across platforms.
///
/// `split(stream)` derives a child generator from the construction seed and a
/// stream id only (never from the current state), so child streams do not
/// depend on how much of the parent has been consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 24 bits of resolution.
  float uniform();
  /// Uniform in [lo, hi).
  float uniform(float lo, float hi);
  /// Unbiased integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool coin();
  /// Standard normal via Box-Muller (double precision internally).
  double normal();

  Rng split(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace tpap
