#include "dragguide/rng.hpp"

#include <cmath>
#include <numbers>

namespace dragguide {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RandomStream RandomStream::from_seed(std::uint64_t seed) {
  return RandomStream(splitmix64(seed ^ 0x6a09e667f3bcc908ULL));
}

RandomStream RandomStream::derive(std::uint64_t tag) const {
  return RandomStream(splitmix64(key_ ^ splitmix64(tag + 0x3c6ef372fe94f82bULL)));
}

RandomStream RandomStream::derive(std::string_view label) const {
  // FNV-1a over the label, then mixed like a numeric tag.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : label) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return derive(h);
}

std::uint64_t RandomStream::bits(std::uint64_t counter) const {
  return splitmix64(key_ + splitmix64(counter));
}

double RandomStream::uniform(std::uint64_t counter) const {
  return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(std::uint64_t counter, double lo, double hi) const {
  return lo + (hi - lo) * uniform(counter);
}

double RandomStream::normal(std::uint64_t index) const {
  const std::uint64_t pair = index & ~std::uint64_t{1};
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform(pair);
  const double u2 = uniform(pair + 1);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (index & 1U) ? radius * std::sin(angle) : radius * std::cos(angle);
}

void RandomStream::fill_normal(std::span<double> out) const {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = normal(i);
}

}  // namespace dragguide
