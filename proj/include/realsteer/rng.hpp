#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace realsteer {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Derives an independent child seed; used to fan one campaign seed out to
/// per-prompt and per-purpose seeds.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return mix64(mix64(seed) ^ mix64(index + 0x632BE59BD9B4E019ull));
}

/// Counter-based generator: the n-th output is a pure function of
/// (key, n), so streams are reproducible on every platform and can be
/// re-keyed per sample and timestep without shared state.
class SeededRng {
 public:
  static constexpr std::string_view kAlgorithm = "ctr-splitmix64-v1";

  explicit SeededRng(std::uint64_t seed) noexcept : key_(mix64(seed)) {}

  /// Child stream keyed by up to two extra indices.
  SeededRng derive(std::uint64_t a, std::uint64_t b = 0) const noexcept {
    SeededRng child(0);
    child.key_ = mix64(key_ ^ mix64(a ^ mix64(b + 0xD1B54A32D192ED03ull)));
    return child;
  }

  std::uint64_t next_u64() noexcept { return mix64(key_ + 0x9E3779B97F4A7C15ull * ++counter_); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Standard normal via Box-Muller; the paired draw is cached.
  double normal() noexcept;

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::optional<double> spare_;
};

/// FNV-1a over raw bytes; stable content digest for payloads and samples.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ull) noexcept;

}  // namespace realsteer
