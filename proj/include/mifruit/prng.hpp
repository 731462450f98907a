#pragma once

#include <cstdint>
#include <vector>

namespace mifruit {

/// SplitMix64. The whole state is one 64-bit word, so any implementation
/// that follows the reference constants reproduces the same streams.
struct PrngState {
  std::uint64_t state = 0;
};

struct PrngDraw {
  std::uint64_t value;
  PrngState next;
};

constexpr PrngDraw prng_next(PrngState s) {
  std::uint64_t z = s.state + 0x9E3779B97F4A7C15ULL;
  PrngState next{z};
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return {z ^ (z >> 31), next};
}

/// Mutable convenience wrapper around prng_next.
class Prng {
 public:
  explicit Prng(std::uint64_t seed = 0) : s_{seed} {}

  std::uint64_t next_u64() {
    auto d = prng_next(s_);
    s_ = d.next;
    return d.value;
  }

  // 53 random mantissa bits -> [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Inclusive integer range.
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  PrngState state() const { return s_; }

 private:
  PrngState s_;
};

/// Fisher-Yates, walking from the back.
template <typename Vec>
void shuffle(Vec& v, Prng& prng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(prng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace mifruit
