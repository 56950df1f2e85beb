#pragma once

#include <array>

#include "weft/ops.hpp"

namespace weft::ops::detail {

// Records `out` on the active tape when any input is tape-connected, after
// the optional debug NaN scan. Backward closures must capture input node ids
// themselves (they are snapshotted before this call mutates nothing).
inline Tensor finish(const char* op, Tensor out, std::initializer_list<int> input_nodes,
                     Tape::BackwardFn fn) {
  if (debug_checks_enabled()) check_finite(out, op);
  Tape* tape = Tape::current();
  if (!tape) return out;
  bool connected = false;
  for (int n : input_nodes) connected |= (n >= 0);
  if (!connected) return out;
  out.node = tape->add_node(op, std::move(fn));
  out.requires_grad = true;
  return out;
}

inline void require_same_dtype(const char* op, const Tensor& a, const Tensor& b) {
  if (a.dtype() != b.dtype())
    fail(std::string(op) + ": dtype mismatch " + dtype_name(a.dtype()) + " vs " + dtype_name(b.dtype()));
}

// NumPy broadcast of two shapes; throws with op context on mismatch.
Shape broadcast_shape(const char* op, const Shape& a, const Shape& b);

// Strides (in elements) of a shape, with 0 on axes broadcast up to `out`.
std::vector<i64> broadcast_strides(const Shape& in, const Shape& out);

// Reduces `g` (shaped like `out`) back to `in_shape` by summing the
// broadcast axes. Used by binary-op backwards.
Tensor reduce_to_shape(const Tensor& g, const Shape& in_shape);

template <class T, class F>
void binary_broadcast_loop(const Tensor& a, const Tensor& b, Tensor& out, F&& f) {
  const Shape& os = out.shape();
  i64 n = out.numel();
  auto pa = a.data<const T>();
  auto pb = b.data<const T>();
  auto po = out.data<T>();
  if (a.shape() == os && b.shape() == os) {
    parallel_for(n, [&](i64 i) { po[static_cast<size_t>(i)] = f(pa[static_cast<size_t>(i)], pb[static_cast<size_t>(i)]); });
    return;
  }
  auto sa = broadcast_strides(a.shape(), os);
  auto sb = broadcast_strides(b.shape(), os);
  int r = out.rank();
  parallel_for(n, [&](i64 flat) {
    i64 rem = flat, ia = 0, ib = 0;
    for (int d = r - 1; d >= 0; --d) {
      i64 idx = rem % os[static_cast<size_t>(d)];
      rem /= os[static_cast<size_t>(d)];
      ia += idx * sa[static_cast<size_t>(d)];
      ib += idx * sb[static_cast<size_t>(d)];
    }
    po[static_cast<size_t>(flat)] = f(pa[static_cast<size_t>(ia)], pb[static_cast<size_t>(ib)]);
  });
}

// Dispatch a generic lambda on the tensor dtype: cb(Tag<float|double>{}).
template <class T>
struct Tag {
  using type = T;
};

template <class F>
auto dispatch(DType dt, F&& cb) {
  return dt == DType::F32 ? cb(Tag<float>{}) : cb(Tag<double>{});
}

}  // namespace weft::ops::detail
