#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>
#include <random>

namespace qtraj {

// splitmix64 step: advances `state` and returns a scrambled 64-bit word.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seed for stream `index` derived from `base_seed`. Trajectory i always gets the
// same generator regardless of thread count or launch order.
inline std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index) {
  std::uint64_t s = base_seed ^ 0x5851f42d4c957f2dull;
  s += 0x9e3779b97f4a7c15ull * (index + 1);
  std::uint64_t z = splitmix64_next(s);
  return z ^ splitmix64_next(s);
}

// mt19937_64 wrapped with 53-bit uniforms and a cached Box-Muller normal.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // [0, 1), 53-bit granularity
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // standard normal; consumes exactly two uniforms per pair
  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]: keeps the log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline Rng trajectory_rng(std::uint64_t base_seed, std::uint64_t index) {
  return Rng(derive_seed(base_seed, index));
}

}  // namespace qtraj
