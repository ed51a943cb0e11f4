#pragma once

// Portable, seedable randomness. Everything here produces identical streams on
// every platform: std:: distributions are implementation-defined, so bounded
// draws and shuffles are done by hand on top of raw 64-bit generators.

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <utility>

namespace nftk::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive combination of keys into one well-mixed word. This is the
/// counter-based draw: any (seed, epoch, token, trait) tuple maps to a value
/// without touching shared generator state.
constexpr std::uint64_t mix(std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k));
  return h;
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t r) noexcept {
  return static_cast<double>(r >> 11) * 0x1.0p-53;
}

/// Sequential generator (satisfies UniformRandomBitGenerator).
class SplitMix {
 public:
  using result_type = std::uint64_t;
  explicit constexpr SplitMix(std::uint64_t seed) noexcept : state_(seed) {}
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }
  constexpr result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Unbiased draw in [0, n) by rejection; n must be > 0.
template <class Gen>
std::uint64_t uniform_below(Gen& gen, std::uint64_t n) {
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
  for (;;) {
    const std::uint64_t r = static_cast<std::uint64_t>(gen());
    if (r < limit) return r % n;
  }
}

/// Fisher-Yates, identical output for identical (input, generator state).
template <class T, class Gen>
void shuffle(std::span<T> items, Gen& gen) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(gen, i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace nftk::rng
