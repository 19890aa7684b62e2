#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <string_view>

namespace repeatlab {

// splitmix64 (Vigna's reference constants). Small state, full 64-bit output
// mixing, and cheap stream derivation; all randomness in the project flows
// through this so results are bit-reproducible across platforms.
inline constexpr uint64_t kSplitMixGamma = 0x9E3779B97F4A7C15ull;

inline constexpr uint64_t splitmix_mix(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class SplitMix64 {
 public:
  explicit constexpr SplitMix64(uint64_t seed) : state_(seed) {}
  constexpr uint64_t next() {
    state_ += kSplitMixGamma;
    return splitmix_mix(state_);
  }

 private:
  uint64_t state_;
};

// 64-bit FNV-1a, used to fold string labels into seed derivations.
inline constexpr uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

// Stable, order-sensitive mixing of a base seed with labels. Each absorbed
// token passes through the splitmix64 finalizer, so permuted or truncated
// label tuples land in unrelated streams.
inline constexpr uint64_t derive_absorb(uint64_t h, uint64_t token) {
  return splitmix_mix((h + kSplitMixGamma) ^ splitmix_mix(token + kSplitMixGamma));
}

struct SeedLabel {
  uint64_t token;
  constexpr SeedLabel(uint64_t v) : token(v) {}
  constexpr SeedLabel(int v) : token(static_cast<uint64_t>(v)) {}
  constexpr SeedLabel(long v) : token(static_cast<uint64_t>(v)) {}
  constexpr SeedLabel(long long v) : token(static_cast<uint64_t>(v)) {}
  constexpr SeedLabel(unsigned v) : token(v) {}
  constexpr SeedLabel(std::string_view s) : token(fnv1a64(s)) {}
  constexpr SeedLabel(const char* s) : token(fnv1a64(s)) {}
};

inline constexpr uint64_t derive_seed(uint64_t base_seed,
                                      std::initializer_list<SeedLabel> labels) {
  uint64_t h = splitmix_mix(base_seed + kSplitMixGamma);
  for (const SeedLabel& l : labels) h = derive_absorb(h, l.token);
  return h;
}

template <typename... Ls>
constexpr uint64_t derive_seed(uint64_t base_seed, Ls... labels) {
  return derive_seed(base_seed, std::initializer_list<SeedLabel>{SeedLabel(labels)...});
}

// Deterministic generator with fixed draw counts per primitive: uniform01 and
// rademacher consume one word, normal consumes exactly two. Dataset rows land
// at fixed stream offsets, which is what makes prefix nesting exact.
class Rng {
 public:
  explicit Rng(uint64_t seed) : sm_(seed) {}

  uint64_t u64() { return sm_.next(); }

  // [0, 1), 53-bit resolution
  double uniform01() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // strictly positive uniform in (0, 1), for log()
  double uniform_pos() {
    return (static_cast<double>(u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Box-Muller, cosine branch only; two words per draw, no cached spare.
  double normal() {
    double u1 = uniform_pos();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double rademacher() { return uniform01() < 0.5 ? 1.0 : -1.0; }

  // +1 with probability p, else -1; shares the rademacher convention so that
  // p = 0.5 reproduces the unbiased stream bit-for-bit.
  double pm_bernoulli(double p) { return uniform01() < p ? 1.0 : -1.0; }

  // uniform integer in [0, n); multiply-shift, bias < n / 2^64
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(u64()) * n) >> 64);
  }

 private:
  SplitMix64 sm_;
};

}  // namespace repeatlab
