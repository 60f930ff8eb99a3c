#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace tent {

// Stream roles. A generator is keyed by (seed, stream index, role), so any
// (task, purpose) pair owns an independent substream and can be materialized
// in any order with identical results.
enum class Role : std::uint64_t {
  ClassDraw = 1,
  Support = 2,
  Query = 3,
  Init = 4,
  Dropout = 5,
  SbmEdges = 6,
  SbmFeatures = 7,
  Split = 8,
  TrainStream = 9,
  ValStream = 10,
  TestStream = 11,
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based splittable generator: splitmix64 over a mixed (seed, stream,
// role) key. State is 8 bytes, copyable, and never shared between purposes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0,
               Role role = Role::ClassDraw) {
    std::uint64_t h = detail::mix64(seed);
    h = detail::mix64(h ^ (0x9E3779B97F4A7C15ULL * (stream + 1)));
    h = detail::mix64(h ^ (0xC2B2AE3D27D4EB4FULL * static_cast<std::uint64_t>(role)));
    state_ = h;
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Exact uniform integer in [0, n); rejection sampling, no modulo bias.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  // Standard normal via Box-Muller; one draw per call (the twin is dropped so
  // the stream position is a pure function of the call count).
  double next_gaussian() {
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // First k elements of a seeded partial Fisher-Yates shuffle of `items`.
  template <typename T>
  std::vector<T> sample_without_replacement(std::vector<T> items,
                                            std::size_t k) {
    if (k > items.size()) k = items.size();
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t pick =
          j + static_cast<std::size_t>(next_below(items.size() - j));
      std::swap(items[j], items[pick]);
    }
    items.resize(k);
    return items;
  }

 private:
  std::uint64_t state_;
};

}  // namespace tent
