#pragma once

#include <cmath>
#include <cstdint>

namespace rmst {

// Deterministic splitmix64 stream. Every stochastic routine in the library
// derives one of these from (seed, key...) so a result depends only on the
// seed and the logical index of the draw, never on thread scheduling or on
// standard-library distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n); n must be positive. Rejection-free modulo with
  // a 64-bit state is fine at the bound sizes used here.
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

namespace detail {
inline std::uint64_t mix_key(std::uint64_t h, std::uint64_t k) {
  h ^= k + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  Rng r(h);
  return r.next_u64();
}
}  // namespace detail

// Builds the stream for a logical unit of work, e.g.
// make_stream(seed, replicate, subject).
inline Rng make_stream(std::uint64_t seed) { return Rng(detail::mix_key(0x61c8864680b583ebull, seed)); }
inline Rng make_stream(std::uint64_t seed, std::uint64_t k1) {
  return Rng(detail::mix_key(detail::mix_key(0x61c8864680b583ebull, seed), k1));
}
inline Rng make_stream(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2) {
  return Rng(detail::mix_key(detail::mix_key(detail::mix_key(0x61c8864680b583ebull, seed), k1), k2));
}

}  // namespace rmst
