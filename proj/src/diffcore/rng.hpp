#pragma once

#include <cstdint>
#include <string_view>

namespace anchorforge::diff {

/// Counter-based generator: value n of the stream is a pure function of
/// (seed, n), so streams are identical across runs and platforms.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal via Box-Muller (two uniforms per draw, no caching).
  double normal();
  /// Normal with std `sigma`, resampled until within +-bound*sigma.
  double truncated_normal(double sigma, double bound = 2.0);

  /// Independent stream derived from this seed and a name; does not advance
  /// this generator.
  SeededRng fork(std::string_view name) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

/// Named sub-seed: mixes a parent seed with an FNV-1a hash of `name`.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

}  // namespace anchorforge::diff
