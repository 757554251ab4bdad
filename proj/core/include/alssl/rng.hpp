#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace alssl {

/// SplitMix64 finalizer. Used both as a key mixer and as the state
/// transition of KeyedRng.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds an arbitrary tuple of integers into one 64-bit stream key.
constexpr std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

/// Stream tags keep independent consumers of the same seed apart.
enum class Stream : std::uint64_t {
  init = 1,
  augment = 2,
  batch = 3,
  vat = 4,
  pools = 5,
  random_sampling = 6,
  dataset = 7,
  split = 8,
};

/// Small counter-style generator; cheap to construct per (seed, id, ...)
/// key so every random draw in the pipeline is addressable. Satisfies
/// UniformRandomBitGenerator.
class KeyedRng {
 public:
  using result_type = std::uint64_t;

  explicit KeyedRng(std::uint64_t key) noexcept : state_(key) {}
  KeyedRng(Stream stream, std::initializer_list<std::uint64_t> parts) noexcept
      : state_(mix64(static_cast<std::uint64_t>(stream)) ^ derive_key(parts)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Standard normal via Marsaglia's polar method.
  double normal() noexcept;

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace alssl
