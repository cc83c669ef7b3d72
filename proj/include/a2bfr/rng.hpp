#pragma once

#include <cmath>
#include <cstdint>

#include "a2bfr/common.hpp"

namespace a2bfr {

// 64-bit finalizer from splitmix64 (Vigna). Used both as the generator step
// and as the documented seed-mixing function for deriving child seeds.
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// Per-purpose stream tags. Every piece of randomness in the pipeline derives
// from one root seed through derive_seed(root, tag, index), so any record,
// training step, or edit is independently reproducible.
enum SeedTag : uint64_t {
  kTagCorpusRecord = 1,
  kTagDegrade = 2,
  kTagTrainStep = 3,
  kTagSampleInit = 4,
  kTagEditNoise = 5,
  kTagEncoderInit = 6,
  kTagModelInit = 7,
  kTagEval = 8,
  kTagEncoderStep = 9,
  kTagEditRecord = 10,
};

// Child seed = mix64(mix64(base + GOLDEN*tag) + GOLDEN*(index+1)).
inline uint64_t derive_seed(uint64_t base, uint64_t tag, uint64_t index = 0) {
  return mix64(mix64(base + kGolden * tag) + kGolden * (index + 1));
}

// splitmix64 stream with a Box-Muller gaussian (cached spare). Self-contained
// so results are identical across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += kGolden);
    return mix64(z);
  }

  // Uniform in [0, 1), 53-bit resolution.
  Scalar uniform() { return static_cast<Scalar>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  Scalar uniform(Scalar lo, Scalar hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  Scalar gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    Scalar u1 = 1.0 - uniform();  // (0, 1]
    Scalar u2 = uniform();
    Scalar r = std::sqrt(-2.0 * std::log(u1));
    Scalar a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  bool bernoulli(Scalar p) { return uniform() < p; }

 private:
  uint64_t state_;
  Scalar spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace a2bfr
