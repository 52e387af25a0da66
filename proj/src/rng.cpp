#include "motrans/rng.hpp"

#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace motrans {

RngStream::RngStream(std::uint64_t seed) : engine_(seed) {}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo);
  if (span == std::numeric_limits<std::uint64_t>::max()) {
    return lo + static_cast<std::int64_t>(next_u64());
  }
  const std::uint64_t range = span + 1;
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return lo + static_cast<std::int64_t>(x % range);
}

double RngStream::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::size_t RngStream::weighted_index(std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || !(total > 0.0)) {
    throw std::invalid_argument("weighted_index: weights must have positive sum");
  }
  const double u = uniform01() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // Rounding can leave u == total; fall back to the last positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size() - 1;
}

std::string RngStream::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

RngStream RngStream::restore(const std::string& state) {
  RngStream r;
  std::istringstream is(state);
  is >> r.engine_;
  if (is.fail()) throw std::runtime_error("RngStream: malformed state");
  return r;
}

RngStream RngStream::derive(std::uint64_t seed, std::uint64_t key) {
  return RngStream(splitmix64(splitmix64(seed) ^ (key + 0x9e3779b97f4a7c15ULL)));
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_ints(std::span<const int> xs) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int v : xs) {
    auto u = static_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) {
      h ^= (u >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace motrans
