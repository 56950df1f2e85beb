#include "weft/rng.hpp"

#include <cmath>

namespace weft {

u64 Rng::mix(u64 x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Rng Rng::fork(std::string_view name) const {
  // FNV-1a over the name, folded into the parent key.
  u64 h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return Rng(mix(key_ ^ mix(h)), true);
}

Rng Rng::fork(u64 index) const { return Rng(mix(key_ ^ mix(index * 0x9e3779b97f4a7c15ull + 1)), true); }

u64 Rng::next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

double Rng::uniform() {
  // 53 random bits into [0, 1)
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

i64 Rng::uniform_int(i64 lo, i64 hi) {
  u64 span = static_cast<u64>(hi - lo) + 1;
  return lo + static_cast<i64>(next_u64() % span);
}

double Rng::normal() {
  // Box-Muller; u clamped away from 0 so log stays finite.
  double u = uniform();
  if (u < 1e-300) u = 1e-300;
  double v = uniform();
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
}

double Rng::truncated_normal(double stddev) {
  for (;;) {
    double z = normal();
    if (std::fabs(z) <= 2.0) return z * stddev;
  }
}

}  // namespace weft
