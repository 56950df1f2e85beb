#include <cmath>

#include "ops_common.hpp"

namespace weft::ops {

using detail::dispatch;
using detail::finish;

namespace {

struct Lerp {
  i64 lo, hi;
  double frac;
};

inline Lerp lerp_coeff(double src, i64 n) {
  if (src < 0) src = 0;
  if (src > static_cast<double>(n - 1)) src = static_cast<double>(n - 1);
  i64 lo = static_cast<i64>(std::floor(src));
  if (lo > n - 2) lo = n >= 2 ? n - 2 : 0;
  i64 hi = n >= 2 ? lo + 1 : 0;
  return {lo, hi, src - static_cast<double>(lo)};
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, i64 out_h, i64 out_w) {
  if (x.rank() != 4) fail("resize_bilinear: expected [B,C,H,W], got " + shape_str(x.shape()));
  i64 B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (out_h < 1 || out_w < 1) fail("resize_bilinear: bad target size");
  Tensor out(Shape{B, C, out_h, out_w}, x.dtype());
  double sh = static_cast<double>(H) / static_cast<double>(out_h);
  double sw = static_cast<double>(W) / static_cast<double>(out_w);

  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    auto po = out.data<T>();
    parallel_for(B * C, [&](i64 bc) {
      const T* src = px.data() + bc * H * W;
      T* dst = po.data() + bc * out_h * out_w;
      for (i64 oy = 0; oy < out_h; ++oy) {
        Lerp ly = lerp_coeff((static_cast<double>(oy) + 0.5) * sh - 0.5, H);
        for (i64 ox = 0; ox < out_w; ++ox) {
          Lerp lx = lerp_coeff((static_cast<double>(ox) + 0.5) * sw - 0.5, W);
          double v00 = static_cast<double>(src[ly.lo * W + lx.lo]);
          double v01 = static_cast<double>(src[ly.lo * W + lx.hi]);
          double v10 = static_cast<double>(src[ly.hi * W + lx.lo]);
          double v11 = static_cast<double>(src[ly.hi * W + lx.hi]);
          double top = v00 + (v01 - v00) * lx.frac;
          double bot = v10 + (v11 - v10) * lx.frac;
          dst[oy * out_w + ox] = static_cast<T>(top + (bot - top) * ly.frac);
        }
      }
    });
    return 0;
  });

  int nx = x.node;
  Shape in_shape = x.shape();
  return finish("resize_bilinear", std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    if (nx < 0) return;
    Tensor gx(in_shape, g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pg = g.data<const T>();
      auto pgx = gx.data<T>();
      parallel_for(B * C, [&](i64 bc) {
        const T* src = pg.data() + bc * out_h * out_w;
        T* dst = pgx.data() + bc * H * W;
        for (i64 oy = 0; oy < out_h; ++oy) {
          Lerp ly = lerp_coeff((static_cast<double>(oy) + 0.5) * sh - 0.5, H);
          for (i64 ox = 0; ox < out_w; ++ox) {
            Lerp lx = lerp_coeff((static_cast<double>(ox) + 0.5) * sw - 0.5, W);
            double gv = static_cast<double>(src[oy * out_w + ox]);
            dst[ly.lo * W + lx.lo] += static_cast<T>(gv * (1 - ly.frac) * (1 - lx.frac));
            dst[ly.lo * W + lx.hi] += static_cast<T>(gv * (1 - ly.frac) * lx.frac);
            dst[ly.hi * W + lx.lo] += static_cast<T>(gv * ly.frac * (1 - lx.frac));
            dst[ly.hi * W + lx.hi] += static_cast<T>(gv * ly.frac * lx.frac);
          }
        }
      });
      return 0;
    });
    t.accumulate(nx, gx);
  });
}

Tensor resize_nearest(const Tensor& x, i64 out_h, i64 out_w) {
  if (x.rank() != 4) fail("resize_nearest: expected [B,C,H,W], got " + shape_str(x.shape()));
  i64 B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor out(Shape{B, C, out_h, out_w}, x.dtype());
  double sh = static_cast<double>(H) / static_cast<double>(out_h);
  double sw = static_cast<double>(W) / static_cast<double>(out_w);
  std::vector<i64> ymap(static_cast<size_t>(out_h)), xmap(static_cast<size_t>(out_w));
  for (i64 oy = 0; oy < out_h; ++oy)
    ymap[static_cast<size_t>(oy)] = std::min<i64>(H - 1, static_cast<i64>(std::floor((oy + 0.5) * sh)));
  for (i64 ox = 0; ox < out_w; ++ox)
    xmap[static_cast<size_t>(ox)] = std::min<i64>(W - 1, static_cast<i64>(std::floor((ox + 0.5) * sw)));

  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    auto po = out.data<T>();
    parallel_for(B * C, [&](i64 bc) {
      const T* src = px.data() + bc * H * W;
      T* dst = po.data() + bc * out_h * out_w;
      for (i64 oy = 0; oy < out_h; ++oy)
        for (i64 ox = 0; ox < out_w; ++ox)
          dst[oy * out_w + ox] = src[ymap[static_cast<size_t>(oy)] * W + xmap[static_cast<size_t>(ox)]];
    });
    return 0;
  });

  int nx = x.node;
  Shape in_shape = x.shape();
  return finish("resize_nearest", std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    if (nx < 0) return;
    Tensor gx(in_shape, g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pg = g.data<const T>();
      auto pgx = gx.data<T>();
      parallel_for(B * C, [&](i64 bc) {
        const T* src = pg.data() + bc * out_h * out_w;
        T* dst = pgx.data() + bc * H * W;
        for (i64 oy = 0; oy < out_h; ++oy)
          for (i64 ox = 0; ox < out_w; ++ox)
            dst[ymap[static_cast<size_t>(oy)] * W + xmap[static_cast<size_t>(ox)]] += src[oy * out_w + ox];
      });
      return 0;
    });
    t.accumulate(nx, gx);
  });
}

Tensor sample_bilinear(const Tensor& map, const Tensor& coords) {
  if (map.rank() != 4) fail("sample_bilinear: map must be [B,C,h,w], got " + shape_str(map.shape()));
  if (coords.rank() != 4 || coords.dim(3) != 2)
    fail("sample_bilinear: coords must be [B,Q,S,2], got " + shape_str(coords.shape()));
  if (map.dim(0) != coords.dim(0)) fail("sample_bilinear: batch mismatch");
  detail::require_same_dtype("sample_bilinear", map, coords);
  i64 B = map.dim(0), C = map.dim(1), H = map.dim(2), W = map.dim(3);
  i64 Q = coords.dim(1), S = coords.dim(2);
  Tensor out(Shape{B, Q, S, C}, map.dtype());

  dispatch(map.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto pm = map.data<const T>();
    auto pc = coords.data<const T>();
    auto po = out.data<T>();
    parallel_for(B * Q, [&](i64 bq) {
      i64 b = bq / Q, q = bq % Q;
      for (i64 s = 0; s < S; ++s) {
        size_t ci = static_cast<size_t>(((b * Q + q) * S + s) * 2);
        double cx = std::clamp(static_cast<double>(pc[ci]), 0.0, 1.0);
        double cy = std::clamp(static_cast<double>(pc[ci + 1]), 0.0, 1.0);
        Lerp lx = lerp_coeff(cx * static_cast<double>(W - 1), W);
        Lerp ly = lerp_coeff(cy * static_cast<double>(H - 1), H);
        T* dst = po.data() + ((b * Q + q) * S + s) * C;
        const T* mb = pm.data() + b * C * H * W;
        for (i64 c = 0; c < C; ++c) {
          const T* plane = mb + c * H * W;
          double v00 = static_cast<double>(plane[ly.lo * W + lx.lo]);
          double v01 = static_cast<double>(plane[ly.lo * W + lx.hi]);
          double v10 = static_cast<double>(plane[ly.hi * W + lx.lo]);
          double v11 = static_cast<double>(plane[ly.hi * W + lx.hi]);
          double top = v00 + (v01 - v00) * lx.frac;
          double bot = v10 + (v11 - v10) * lx.frac;
          dst[c] = static_cast<T>(top + (bot - top) * ly.frac);
        }
      }
    });
    return 0;
  });

  int nm = map.node, nc = coords.node;
  Tensor mc = map, cc = coords;
  return finish("sample_bilinear", std::move(out), {nm, nc}, [=](Tape& t, const Tensor& g) {
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pm = mc.data<const T>();
      auto pc = cc.data<const T>();
      auto pg = g.data<const T>();
      Tensor gm, gc;
      if (nm >= 0) gm = Tensor(mc.shape(), g.dtype());
      if (nc >= 0) gc = Tensor(cc.shape(), g.dtype());
      for (i64 b = 0; b < B; ++b) {
        for (i64 q = 0; q < Q; ++q) {
          for (i64 s = 0; s < S; ++s) {
            size_t ci = static_cast<size_t>(((b * Q + q) * S + s) * 2);
            double rx = static_cast<double>(pc[ci]);
            double ry = static_cast<double>(pc[ci + 1]);
            bool inside_x = rx > 0.0 && rx < 1.0;
            bool inside_y = ry > 0.0 && ry < 1.0;
            Lerp lx = lerp_coeff(std::clamp(rx, 0.0, 1.0) * static_cast<double>(W - 1), W);
            Lerp ly = lerp_coeff(std::clamp(ry, 0.0, 1.0) * static_cast<double>(H - 1), H);
            const T* grow = pg.data() + ((b * Q + q) * S + s) * C;
            double dgx = 0.0, dgy = 0.0;
            for (i64 c = 0; c < C; ++c) {
              double gv = static_cast<double>(grow[c]);
              const T* plane = pm.data() + (b * C + c) * H * W;
              double v00 = static_cast<double>(plane[ly.lo * W + lx.lo]);
              double v01 = static_cast<double>(plane[ly.lo * W + lx.hi]);
              double v10 = static_cast<double>(plane[ly.hi * W + lx.lo]);
              double v11 = static_cast<double>(plane[ly.hi * W + lx.hi]);
              if (nm >= 0) {
                T* gplane = gm.data<T>().data() + (b * C + c) * H * W;
                gplane[ly.lo * W + lx.lo] += static_cast<T>(gv * (1 - ly.frac) * (1 - lx.frac));
                gplane[ly.lo * W + lx.hi] += static_cast<T>(gv * (1 - ly.frac) * lx.frac);
                gplane[ly.hi * W + lx.lo] += static_cast<T>(gv * ly.frac * (1 - lx.frac));
                gplane[ly.hi * W + lx.hi] += static_cast<T>(gv * ly.frac * lx.frac);
              }
              // d/dfrac of the interpolation
              dgx += gv * ((v01 - v00) * (1 - ly.frac) + (v11 - v10) * ly.frac);
              dgy += gv * ((v10 - v00) * (1 - lx.frac) + (v11 - v01) * lx.frac);
            }
            if (nc >= 0) {
              auto pgc = gc.data<T>();
              // chain through pixel-space mapping; clamp kills the gradient outside
              pgc[ci] = static_cast<T>(inside_x ? dgx * static_cast<double>(W - 1) : 0.0);
              pgc[ci + 1] = static_cast<T>(inside_y ? dgy * static_cast<double>(H - 1) : 0.0);
            }
          }
        }
      }
      if (nm >= 0) t.accumulate(nm, gm);
      if (nc >= 0) t.accumulate(nc, gc);
      return 0;
    });
  });
}

}  // namespace weft::ops
