#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace dragguide {

/// Counter-based random streams.
///
/// Every draw is a pure function of (key, counter), so a run's noise does not
/// depend on evaluation order or on how work is split across threads. Keys
/// are derived hierarchically from a user seed with `derive`.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key) : key_(key) {}

  [[nodiscard]] static RandomStream from_seed(std::uint64_t seed);

  /// Child stream keyed by a numeric tag (sample index, step, record...).
  [[nodiscard]] RandomStream derive(std::uint64_t tag) const;
  /// Child stream keyed by a purpose label.
  [[nodiscard]] RandomStream derive(std::string_view label) const;

  [[nodiscard]] std::uint64_t key() const { return key_; }

  [[nodiscard]] std::uint64_t bits(std::uint64_t counter) const;
  /// Uniform on [0, 1) with 53 random bits.
  [[nodiscard]] double uniform(std::uint64_t counter) const;
  /// Uniform on [lo, hi).
  [[nodiscard]] double uniform(std::uint64_t counter, double lo, double hi) const;
  /// Standard normal; draws 2k and 2k+1 share one Box-Muller pair.
  [[nodiscard]] double normal(std::uint64_t index) const;

  /// out[i] = normal(i)
  void fill_normal(std::span<double> out) const;

 private:
  std::uint64_t key_;
};

[[nodiscard]] std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dragguide
