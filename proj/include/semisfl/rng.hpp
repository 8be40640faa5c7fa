#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace semisfl {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and a tuple of tags.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(master);
  for (auto t : tags) h = splitmix64(h ^ splitmix64(t + 0x632BE59BD9B4E019ull));
  return h;
}

/// Uniform in (0, 1) addressed by (seed, tags); no generator state involved.
inline double addressed_uniform(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  return (double(derive_seed(master, tags) >> 11) + 0.5) * 0x1.0p-53;
}

inline std::mt19937_64 make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  return std::mt19937_64(derive_seed(master, tags));
}

}  // namespace semisfl
