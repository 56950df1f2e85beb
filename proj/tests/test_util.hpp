#pragma once

#include <cmath>

#include "weft/ops.hpp"
#include "weft/rng.hpp"
#include "weft/tensor.hpp"

namespace weft::testutil {

inline Tensor rand_tensor(Rng& rng, Shape shape, DType dt = DType::F64, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape), dt);
  for (i64 i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (i64 i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a.at(i) - b.at(i)));
  return m;
}

inline double max_rel_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (i64 i = 0; i < a.numel(); ++i) {
    double d = std::fabs(a.at(i) - b.at(i));
    m = std::max(m, d / std::max({std::fabs(a.at(i)), std::fabs(b.at(i)), 1e-8}));
  }
  return m;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) return false;
  return std::memcmp(a.raw(), b.raw(), a.raw_size()) == 0;
}

}  // namespace weft::testutil
