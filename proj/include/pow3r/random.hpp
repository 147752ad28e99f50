#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pow3r {

// Counter-based draws: every random value is a pure function of its coordinates,
// so results do not depend on evaluation order or thread count.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) { return splitmix64(seed ^ splitmix64(value)); }

inline std::uint64_t hash_combine(std::uint64_t seed, std::string_view value) {
  return hash_combine(seed, fnv1a64(value));
}

/// Uniform in [0, 1) from the top 53 bits.
inline double unit_interval(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

/// mt19937_64 seeded from a hashed coordinate, with a portable uniform draw.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return unit_interval(engine_()); }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pow3r
