#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace motrans {

// Seedable deterministic random source. All draws go through portable
// routines (no std::*_distribution) so sequences are identical across
// standard library implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Uniform real in [0, 1) with 53 random bits.
  double uniform01();
  bool bernoulli(double p) { return uniform01() < p; }
  // Index drawn with probability proportional to weights (non-negative, not all zero).
  std::size_t weighted_index(std::span<const double> weights);

  template <typename Container>
  const auto& pick(const Container& c) {
    return c[static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(c.size()) - 1))];
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::int64_t>(last - first);
    for (std::int64_t i = n - 1; i > 0; --i) {
      std::swap(first[i], first[uniform_int(0, i)]);
    }
  }

  // Full engine state as text; restore() of that text continues the exact sequence.
  std::string serialize() const;
  static RngStream restore(const std::string& state);

  // Independent stream for a (seed, key) pair.
  static RngStream derive(std::uint64_t seed, std::uint64_t key);

  friend bool operator==(const RngStream& a, const RngStream& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// FNV-1a over a sequence of integers; stable key for per-genome streams.
std::uint64_t hash_ints(std::span<const int> xs);

}  // namespace motrans
