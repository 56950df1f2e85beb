#pragma once

#include <cstdint>
#include <string_view>

#include "weft/common.hpp"

namespace weft {

// Counter-based PRNG. A stream is identified by a 64-bit seed and a name;
// child streams split off deterministically. Draws are pure functions of
// (key, counter), so streams are order-independent and reproducible.
class Rng {
 public:
  explicit Rng(u64 seed) : key_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  // Named child stream, e.g. rng.fork("twe.stage1.expert3").
  Rng fork(std::string_view name) const;
  Rng fork(u64 index) const;

  u64 next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);
  i64 uniform_int(i64 lo, i64 hi);        // inclusive range
  double normal();                        // standard normal
  double truncated_normal(double stddev); // resampled until |z| <= 2 stddev

 private:
  explicit Rng(u64 key, bool) : key_(key) {}
  static u64 mix(u64 x);

  u64 key_ = 0;
  u64 counter_ = 0;
};

}  // namespace weft
