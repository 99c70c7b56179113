#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace fedsketch {

// Counter-based deterministic RNG. Every consumer derives its own stream from
// (seed, purpose tag, indices...), so results do not depend on the order in
// which independent pieces of work run. The mixer is splitmix64, which is
// plenty for simulation use and trivially reproducible across platforms.

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream purpose tags. Two streams with different tags never collide even if
// their other key parts coincide.
enum class StreamTag : std::uint64_t {
  scheme_tables = 1,  // label hash table draws
  model_init = 2,     // layer weight initialisation
  selection = 3,      // per-round client selection
  shuffle = 4,        // per (round, client) minibatch shuffles
  partition = 5,      // non-iid partition draws
  synthetic = 6,      // synthetic dataset generation
  split = 7,          // train/test holdout split
  analysis = 8,       // Monte Carlo verification draws
};

class RngStream {
 public:
  // Key the stream by mixing the parts in order; identical part lists give
  // identical streams.
  explicit RngStream(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;  // arbitrary nonzero start
    for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
    state_ = h;
  }

  RngStream(std::uint64_t seed, StreamTag tag,
            std::initializer_list<std::uint64_t> indices = {}) {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    h = splitmix64(h ^ splitmix64(seed));
    h = splitmix64(h ^ splitmix64(static_cast<std::uint64_t>(tag)));
    for (std::uint64_t p : indices) h = splitmix64(h ^ splitmix64(p));
    state_ = h;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // Uniform in [0, n) without modulo bias (rejection on the tail).
  std::uint64_t next_below(std::uint64_t n) {
    // n == 0 would loop forever; treat as a caller bug.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller. The second value of each pair is cached.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fedsketch
