#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace crossview::numcore {

// Deterministic draws over mt19937_64. Callers fix their draw order, so a
// given seed produces the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // uniform in [0,1), 53 random mantissa bits
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, two uniforms per call, no state carried between calls
  double gauss() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  // uniform integer in [0,n), rejection-sampled so all values are equally likely
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t x = gen_();
    std::uint64_t r = x % n;
    while (x - r > static_cast<std::uint64_t>(0) - n) {
      x = gen_();
      r = x % n;
    }
    return r;
  }

  // Fisher-Yates, back to front
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
  }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925286766559;
  std::mt19937_64 gen_;
};

// splitmix64 finalizer, used to derive independent stream seeds
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace crossview::numcore
