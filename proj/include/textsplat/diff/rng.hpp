#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace textsplat::diff {

std::uint64_t splitmix64(std::uint64_t x);
// FNV-1a over the bytes, finalized with splitmix64 and mixed with `seed`.
std::uint64_t hash_string(std::string_view s, std::uint64_t seed = 0);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag);

// Seeded generator whose outputs depend only on the engine's bit stream, so
// sequences are identical on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller.
  double normal();
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace textsplat::diff
