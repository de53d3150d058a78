#include "diffcore/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace anchorforge::diff {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t SeededRng::next_u64() {
  const std::uint64_t key = splitmix64(seed_);
  return splitmix64(key ^ (counter_++ * 0xD1B54A32D192ED03ULL));
}

double SeededRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::int64_t SeededRng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(next_u64() % span);
}

double SeededRng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double SeededRng::truncated_normal(double sigma, double bound) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= bound) return z * sigma;
  }
}

SeededRng SeededRng::fork(std::string_view name) const { return SeededRng(derive_seed(seed_, name)); }

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

}  // namespace anchorforge::diff
