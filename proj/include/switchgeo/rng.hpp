#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace switchgeo {

// SplitMix64 finalizer; bijective mix of a 64-bit word.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// FNV-1a over a byte string.
constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 0xCBF29CE484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// Counter-based generator: draw i of a stream is mix64(key + i*phi64).
// Streams are addressed by (seed, name), so independent units can consume
// their own streams in any schedule and still reproduce bit-identically.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view name)
      : key_(mix64(mix64(seed ^ 0x9E3779B97F4A7C15ull) ^ fnv1a(name))) {}

  std::uint64_t next_u64() {
    ctr_ += 0x9E3779B97F4A7C15ull;
    return mix64(key_ + ctr_);
  }

  // [0, 1) with 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), multiply-shift reduction
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // standard normal, Box-Muller (two uniforms per pair, second cached)
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.28318530717958647692 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline std::string stream_name(std::string_view base, std::uint64_t index) {
  return std::string(base) + "/" + std::to_string(index);
}

inline std::string stream_name(std::string_view base, std::uint64_t i,
                               std::uint64_t j) {
  return std::string(base) + "/" + std::to_string(i) + "/" + std::to_string(j);
}

}  // namespace switchgeo
