#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <utility>

#include "textmill/hashing.hpp"

namespace textmill {

// SplitMix64. The standard <random> engines are portable but the
// distributions are not, so all sampling goes through the helpers below.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Counter-based draw: a pure function of (seed, key, counter).
constexpr std::uint64_t counter_draw(std::uint64_t seed, std::string_view key,
                                     std::uint64_t counter = 0) {
  return mix64(hash64(key, seed) ^ mix64(counter + 0x632be59bd9b4e019ULL));
}

// Unbiased integer in [0, n) by rejection. n must be > 0.
template <typename Gen>
std::uint64_t uniform_below(Gen& gen, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = gen();
  } while (x >= limit);
  return x % n;
}

template <typename T, typename Gen>
void shuffle(std::span<T> items, Gen& gen) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(gen, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace textmill
