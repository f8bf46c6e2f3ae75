#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace dplab {

/// SplitMix64 finalizer. Bijective mixing of a 64-bit word.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a over the bytes of a purpose label.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Counter-based random stream.
///
/// Draw i of a stream with key K is mix64(K + (i + 1) * 0x9E3779B97F4A7C15).
/// Child streams are keyed by
///   mix64(K ^ mix64(fnv1a(purpose) + index * 0xD1B54A32D192ED03)),
/// so a stream tree is fully determined by the base seed and the
/// (purpose, index) path. All distributions below are implemented here
/// rather than taken from <random>, whose distribution algorithms are
/// implementation-defined; outputs are therefore identical across
/// standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) noexcept : key_(mix64(seed ^ 0x5DEECE66DULL)) {}

  static RngStream from_key(std::uint64_t key) noexcept {
    RngStream s{0};
    s.key_ = key;
    return s;
  }

  RngStream derive(std::string_view purpose, std::uint64_t index = 0) const noexcept {
    return from_key(mix64(key_ ^ mix64(fnv1a(purpose) + index * 0xD1B54A32D192ED03ULL)));
  }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; always consumes exactly two draws.
  double normal() noexcept;
  double gaussian(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  /// Uniform integer on [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n) noexcept;

  /// Index drawn from an unnormalized nonnegative weight vector.
  std::size_t categorical(std::span<const double> weights) noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dplab
