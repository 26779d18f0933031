#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace kgcoop {

// splitmix64 finalizer. Used to derive independent stream seeds from one
// run seed so that, e.g., data sampling and context init never share draws.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

enum class SeedStream : std::uint64_t {
  vocabulary = 1,
  encoder = 2,
  context_init = 3,
  data = 4,
};

inline std::uint64_t derive_seed(std::uint64_t base, SeedStream stream) {
  return mix_seed(base + 0x632be59bd9b4e019ull *
                             (static_cast<std::uint64_t>(stream) + 1));
}

// Deterministic uniform/gaussian source. std::normal_distribution's draw
// sequence is not pinned by the standard, so the gaussian is Box-Muller by
// hand; golden files depend on the exact sequence.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1) with 53-bit resolution
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double gaussian(double mean, double stddev) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1], keeps the log finite
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace kgcoop
