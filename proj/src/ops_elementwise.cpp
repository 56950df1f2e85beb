#include <cmath>

#include "ops_common.hpp"

namespace weft::ops {

using detail::dispatch;
using detail::finish;
using detail::Tag;

namespace {

Shape strip_leading_ones(const Shape& s, size_t rank) {
  Shape r = s;
  while (r.size() > rank && r.front() == 1) r.erase(r.begin());
  return r;
}

}  // namespace

namespace detail {

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    i64 da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    i64 db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      fail(std::string(op) + ": shapes not broadcastable " + shape_str(a) + " vs " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

std::vector<i64> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<i64> strides(out.size(), 0);
  i64 acc = 1;
  for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
    size_t oi = out.size() - (in.size() - static_cast<size_t>(i));
    strides[oi] = in[static_cast<size_t>(i)] == 1 ? 0 : acc;
    acc *= in[static_cast<size_t>(i)];
  }
  return strides;
}

Tensor reduce_to_shape(const Tensor& g, const Shape& in_shape) {
  if (g.shape() == in_shape) return g;
  Tensor out(in_shape, g.dtype());
  const Shape& gs = g.shape();
  auto strides = broadcast_strides(in_shape, gs);
  int r = g.rank();
  i64 n = g.numel();
  dispatch(g.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto pg = g.data<const T>();
    auto po = out.data<T>();
    for (i64 flat = 0; flat < n; ++flat) {
      i64 rem = flat, io = 0;
      for (int d = r - 1; d >= 0; --d) {
        i64 idx = rem % gs[static_cast<size_t>(d)];
        rem /= gs[static_cast<size_t>(d)];
        io += idx * strides[static_cast<size_t>(d)];
      }
      po[static_cast<size_t>(io)] += pg[static_cast<size_t>(flat)];
    }
    return 0;
  });
  return out;
}

}  // namespace detail

namespace {

template <class FwdF, class BwdF>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, FwdF fwd, BwdF make_grads) {
  detail::require_same_dtype(name, a, b);
  Shape os = detail::broadcast_shape(name, a.shape(), b.shape());
  Tensor out(os, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    detail::binary_broadcast_loop<T>(a, b, out, fwd);
    return 0;
  });
  int na = a.node, nb = b.node;
  Tensor ac = a, bc = b;
  return finish(name, std::move(out), {na, nb}, [=](Tape& t, const Tensor& g) {
    auto [ga, gb] = make_grads(ac, bc, g);
    if (na >= 0) t.accumulate(na, detail::reduce_to_shape(ga, ac.shape()));
    if (nb >= 0) t.accumulate(nb, detail::reduce_to_shape(gb, bc.shape()));
  });
}

// Elementwise product with broadcasting, no tape involvement. Used inside
// backward closures.
Tensor raw_mul(const Tensor& a, const Tensor& b) {
  Shape os = detail::broadcast_shape("mul", a.shape(), b.shape());
  Tensor out(os, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    detail::binary_broadcast_loop<T>(a, b, out, [](T x, T y) { return x * y; });
    return 0;
  });
  return out;
}

template <class FwdF, class GradF>
Tensor unary_op(const char* name, const Tensor& x, FwdF fwd, GradF grad_at) {
  Tensor out(x.shape(), x.dtype());
  i64 n = x.numel();
  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    auto po = out.data<T>();
    parallel_for(n, [&](i64 i) { po[static_cast<size_t>(i)] = static_cast<T>(fwd(static_cast<double>(px[static_cast<size_t>(i)]))); });
    return 0;
  });
  int nx = x.node;
  Tensor xc = x, oc = out;
  return finish(name, std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    if (nx < 0) return;
    Tensor gx(xc.shape(), xc.dtype());
    i64 m = xc.numel();
    dispatch(xc.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto px = xc.data<const T>();
      auto py = oc.data<const T>();
      auto pg = g.data<const T>();
      auto pgx = gx.data<T>();
      parallel_for(m, [&](i64 i) {
        size_t s = static_cast<size_t>(i);
        pgx[s] = static_cast<T>(grad_at(static_cast<double>(px[s]), static_cast<double>(py[s])) * static_cast<double>(pg[s]));
      });
      return 0;
    });
    t.accumulate(nx, gx);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](auto x, auto y) { return x + y; },
      [](const Tensor&, const Tensor&, const Tensor& g) { return std::pair(g, g); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](auto x, auto y) { return x - y; },
      [](const Tensor&, const Tensor&, const Tensor& g) {
        Tensor neg(g.shape(), g.dtype());
        dispatch(g.dtype(), [&](auto tag) {
          using T = typename decltype(tag)::type;
          auto pg = g.data<const T>();
          auto pn = neg.data<T>();
          for (i64 i = 0; i < g.numel(); ++i) pn[static_cast<size_t>(i)] = -pg[static_cast<size_t>(i)];
          return 0;
        });
        return std::pair(g, neg);
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](auto x, auto y) { return x * y; },
      [](const Tensor& x, const Tensor& y, const Tensor& g) {
        return std::pair(raw_mul(g, y), raw_mul(g, x));
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](auto x, auto y) { return x / y; },
      [](const Tensor& x, const Tensor& y, const Tensor& g) {
        // da = g / y ; db = -g * x / y^2
        Shape os = detail::broadcast_shape("div", x.shape(), y.shape());
        Tensor ga(os, g.dtype()), gb(os, g.dtype());
        dispatch(g.dtype(), [&](auto tag) {
          using T = typename decltype(tag)::type;
          detail::binary_broadcast_loop<T>(g, y, ga, [](T gg, T yy) { return gg / yy; });
          Tensor xy(os, g.dtype());
          detail::binary_broadcast_loop<T>(x, y, xy, [](T xx, T yy) { return -xx / (yy * yy); });
          detail::binary_broadcast_loop<T>(g, xy, gb, [](T gg, T m) { return gg * m; });
          return 0;
        });
        return std::pair(ga, gb);
      });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_op(
      "mul_scalar", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x,
      [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return unary_op(
      "gelu", x, [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [=](double v, double) {
        double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        return cdf + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
      });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

}  // namespace weft::ops
