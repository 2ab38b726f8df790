#pragma once

// Deterministic, platform-stable random streams. Every consumer derives its own
// stream from (seed, purpose-string), so adding a policy or reordering draws in
// one component never perturbs another component's sequence. std::mt19937 is
// avoided because the standard distributions are not bit-portable across
// standard libraries; xoshiro256** plus explicit draw code is.

#include <cstdint>
#include <string_view>

namespace coachres {

class RngStream {
 public:
  RngStream() : RngStream(0, "default") {}
  RngStream(uint64_t seed, std::string_view purpose) {
    // FNV-1a over the purpose string, mixed with the seed via splitmix64.
    uint64_t h = 1469598103934665603ULL;
    for (char ch : purpose) {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ULL;
    }
    uint64_t x = seed ^ (h + 0x9e3779b97f4a7c15ULL);
    for (auto& word : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      word = z ^ (z >> 31);
    }
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  uint64_t next_u64() {
    uint64_t* s = state_;
    const uint64_t result = rotl(s[1] * 5, 7) * 9;
    const uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53 bits of precision.
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, n); n >= 1.
  uint64_t next_below(uint64_t n) {
    // Lemire's method with rejection.
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    uint64_t lo = static_cast<uint64_t>(m);
    if (lo < n) {
      uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_below(static_cast<uint64_t>(hi - lo + 1)));
  }

 private:
  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
  uint64_t state_[4];
};

}  // namespace coachres
