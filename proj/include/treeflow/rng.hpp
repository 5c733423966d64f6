#pragma once
// Deterministic counter-based PRNG used by every module.
//
// One generator family (splitmix64 core) with independent streams derived by
// hashing (seed, purpose-tag).  Standard-library engines/distributions are
// deliberately avoided: their outputs are implementation-defined, and the
// project guarantees bitwise-reproducible artifacts for a given seed.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace treeflow {

namespace detail {

// splitmix64 finalizer; also serves as the mixing function for stream keys.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// FNV-1a over the tag bytes, so stream identity depends on the tag text only.
inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

// A single stream.  State advances as a counter; outputs are mix64(counter),
// which makes every draw a pure function of (seed, tag, draw index).
class Rng {
 public:
  Rng() : state_(0) {}
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Derives the stream for `purpose` under `seed`.  Distinct purposes give
  // statistically independent streams; modules never share one.
  static Rng stream(std::uint64_t seed, std::string_view purpose) {
    return Rng(detail::mix64(seed ^ detail::mix64(detail::hash_tag(purpose))));
  }

  // Child stream, e.g. per-tree or per-repeat substreams.
  Rng substream(std::uint64_t index) const {
    return Rng(detail::mix64(state_ ^ detail::mix64(index + 0x51ed2701u)));
  }

  std::uint64_t next_u64() { return detail::mix64(state_++); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).  Rejection-free modulo is fine here: n is tiny
  // relative to 2^64, so the bias is far below any tolerance in this project.
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (deterministic, no library distribution).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // Guard against log(0).
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Fisher-Yates shuffle of indices 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace treeflow
