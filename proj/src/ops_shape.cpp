#include "ops_common.hpp"

namespace weft::ops {

using detail::dispatch;
using detail::finish;

Tensor reshape(const Tensor& x, Shape shape) {
  // Allow one -1 wildcard.
  i64 known = 1;
  int wild = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (wild >= 0) fail("reshape: more than one -1 in " + shape_str(shape));
      wild = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (wild >= 0) {
    if (known == 0 || x.numel() % known != 0)
      fail("reshape: cannot infer -1 for " + shape_str(x.shape()) + " -> " + shape_str(shape));
    shape[static_cast<size_t>(wild)] = x.numel() / known;
  }
  if (shape_numel(shape) != x.numel())
    fail("reshape: numel mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor out = x.view_as(shape);
  int nx = x.node;
  Shape in_shape = x.shape();
  return finish("reshape", std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    t.accumulate(nx, g.view_as(in_shape));
  });
}

Tensor transpose(const Tensor& x, int ax0, int ax1) {
  int r = x.rank();
  if (ax0 < 0) ax0 += r;
  if (ax1 < 0) ax1 += r;
  if (ax0 < 0 || ax0 >= r || ax1 < 0 || ax1 >= r)
    fail("transpose: axes out of range for " + shape_str(x.shape()));
  Shape os = x.shape();
  std::swap(os[static_cast<size_t>(ax0)], os[static_cast<size_t>(ax1)]);
  Tensor out(os, x.dtype());

  const Shape& is = x.shape();
  std::vector<i64> istr(is.size()), perm_str(is.size());
  i64 acc = 1;
  for (int d = r - 1; d >= 0; --d) {
    istr[static_cast<size_t>(d)] = acc;
    acc *= is[static_cast<size_t>(d)];
  }
  for (int d = 0; d < r; ++d) perm_str[static_cast<size_t>(d)] = istr[static_cast<size_t>(d)];
  std::swap(perm_str[static_cast<size_t>(ax0)], perm_str[static_cast<size_t>(ax1)]);

  i64 n = x.numel();
  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    auto po = out.data<T>();
    parallel_for(n, [&](i64 flat) {
      i64 rem = flat, src = 0;
      for (int d = r - 1; d >= 0; --d) {
        i64 idx = rem % os[static_cast<size_t>(d)];
        rem /= os[static_cast<size_t>(d)];
        src += idx * perm_str[static_cast<size_t>(d)];
      }
      po[static_cast<size_t>(flat)] = px[static_cast<size_t>(src)];
    });
    return 0;
  });
  int nx = x.node;
  return finish("transpose", std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    if (nx >= 0) t.accumulate(nx, transpose(g, ax0, ax1));
  });
}

Tensor slice(const Tensor& x, int axis, i64 start, i64 len) {
  int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) fail("slice: axis out of range for " + shape_str(x.shape()));
  i64 dim = x.dim(axis);
  if (start < 0 || len <= 0 || start + len > dim)
    fail("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) + ") outside axis " +
         std::to_string(axis) + " of " + shape_str(x.shape()));
  Shape os = x.shape();
  os[static_cast<size_t>(axis)] = len;
  Tensor out(os, x.dtype());

  i64 outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < r; ++d) inner *= x.dim(d);

  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    auto po = out.data<T>();
    parallel_for(outer, [&](i64 o) {
      const T* src = px.data() + (o * dim + start) * inner;
      T* dst = po.data() + o * len * inner;
      std::copy(src, src + len * inner, dst);
    });
    return 0;
  });
  int nx = x.node;
  Shape in_shape = x.shape();
  return finish("slice", std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    if (nx < 0) return;
    Tensor gx(in_shape, g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pg = g.data<const T>();
      auto pgx = gx.data<T>();
      for (i64 o = 0; o < outer; ++o) {
        const T* src = pg.data() + o * len * inner;
        T* dst = pgx.data() + (o * dim + start) * inner;
        std::copy(src, src + len * inner, dst);
      }
      return 0;
    });
    t.accumulate(nx, gx);
  });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) fail("concat: no inputs");
  int r = xs[0].rank();
  if (axis < 0) axis += r;
  Shape os = xs[0].shape();
  i64 total = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != r) fail("concat: rank mismatch");
    for (int d = 0; d < r; ++d)
      if (d != axis && t.dim(d) != os[static_cast<size_t>(d)])
        fail("concat: shape mismatch " + shape_str(t.shape()) + " vs " + shape_str(xs[0].shape()));
    detail::require_same_dtype("concat", xs[0], t);
    total += t.dim(axis);
  }
  os[static_cast<size_t>(axis)] = total;
  Tensor out(os, xs[0].dtype());

  i64 outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= os[static_cast<size_t>(d)];
  for (int d = axis + 1; d < r; ++d) inner *= os[static_cast<size_t>(d)];

  dispatch(out.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto po = out.data<T>();
    i64 off = 0;
    for (const Tensor& t : xs) {
      i64 len = t.dim(axis);
      auto pt = t.data<const T>();
      for (i64 o = 0; o < outer; ++o) {
        const T* src = pt.data() + o * len * inner;
        T* dst = po.data() + (o * total + off) * inner;
        std::copy(src, src + len * inner, dst);
      }
      off += len;
    }
    return 0;
  });

  std::vector<int> nodes;
  std::vector<i64> lens;
  bool any = false;
  for (const Tensor& t : xs) {
    nodes.push_back(t.node);
    lens.push_back(t.dim(axis));
    any |= t.node >= 0;
  }
  if (!any) {
    if (debug_checks_enabled()) check_finite(out, "concat");
    return out;
  }
  return finish("concat", std::move(out), {0 /*connected*/}, [=](Tape& t, const Tensor& g) {
    i64 off = 0;
    for (size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i] >= 0) {
        NoGradScope ng;
        t.accumulate(nodes[i], slice(g, axis, off, lens[i]));
      }
      off += lens[i];
    }
  });
}

std::vector<Tensor> split(const Tensor& x, int axis, int parts) {
  int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) fail("split: axis out of range for " + shape_str(x.shape()));
  i64 dim = x.dim(axis);
  if (parts <= 0 || dim % parts != 0)
    fail("split: axis " + std::to_string(axis) + " size " + std::to_string(dim) + " not divisible into " +
         std::to_string(parts) + " parts");
  i64 len = dim / parts;
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(parts));
  for (int p = 0; p < parts; ++p) out.push_back(slice(x, axis, p * len, len));
  return out;
}

Tensor pad2d(const Tensor& x, int pad, PadMode mode) { return pad2d(x, pad, pad, pad, pad, mode); }

Tensor pad2d(const Tensor& x, int top, int bottom, int left, int right, PadMode mode) {
  if (x.rank() != 4) fail("pad2d: expected [B,C,H,W], got " + shape_str(x.shape()));
  if (top < 0 || bottom < 0 || left < 0 || right < 0) fail("pad2d: negative pad");
  i64 B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  i64 Ho = H + top + bottom, Wo = W + left + right;
  Tensor out(Shape{B, C, Ho, Wo}, x.dtype());

  // Edge-repeating mirror, folded until in range.
  auto reflect = [](i64 i, i64 n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
  };

  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    auto po = out.data<T>();
    parallel_for(B * C, [&](i64 bc) {
      const T* src = px.data() + bc * H * W;
      T* dst = po.data() + bc * Ho * Wo;
      for (i64 i = 0; i < Ho; ++i) {
        for (i64 j = 0; j < Wo; ++j) {
          i64 si = i - top, sj = j - left;
          if (mode == PadMode::Reflect) {
            si = reflect(si, H);
            sj = reflect(sj, W);
            dst[i * Wo + j] = src[si * W + sj];
          } else {
            dst[i * Wo + j] =
                (si >= 0 && si < H && sj >= 0 && sj < W) ? src[si * W + sj] : static_cast<T>(0);
          }
        }
      }
    });
    return 0;
  });

  int nx = x.node;
  Shape in_shape = x.shape();
  return finish("pad2d", std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    if (nx < 0) return;
    Tensor gx(in_shape, g.dtype());
    auto reflect = [](i64 i, i64 n) {
      while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
      }
      return i;
    };
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pg = g.data<const T>();
      auto pgx = gx.data<T>();
      for (i64 bc = 0; bc < B * C; ++bc) {
        const T* src = pg.data() + bc * Ho * Wo;
        T* dst = pgx.data() + bc * H * W;
        for (i64 i = 0; i < Ho; ++i) {
          for (i64 j = 0; j < Wo; ++j) {
            i64 si = i - top, sj = j - left;
            if (mode == PadMode::Reflect) {
              dst[reflect(si, H) * W + reflect(sj, W)] += src[i * Wo + j];
            } else if (si >= 0 && si < H && sj >= 0 && sj < W) {
              dst[si * W + sj] += src[i * Wo + j];
            }
          }
        }
      }
      return 0;
    });
    t.accumulate(nx, gx);
  });
}

Tensor gather_rows(const Tensor& x, const std::vector<i64>& idx, i64 k) {
  if (x.rank() != 2) fail("gather_rows: expected [B,E], got " + shape_str(x.shape()));
  i64 B = x.dim(0), E = x.dim(1);
  if (static_cast<i64>(idx.size()) != B * k) fail("gather_rows: index count mismatch");
  Tensor out(Shape{B, k}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    auto po = out.data<T>();
    for (i64 b = 0; b < B; ++b)
      for (i64 u = 0; u < k; ++u) {
        i64 e = idx[static_cast<size_t>(b * k + u)];
        if (e < 0 || e >= E) fail("gather_rows: index out of range");
        po[static_cast<size_t>(b * k + u)] = px[static_cast<size_t>(b * E + e)];
      }
    return 0;
  });
  int nx = x.node;
  auto indices = idx;
  return finish("gather_rows", std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    if (nx < 0) return;
    Tensor gx(Shape{B, E}, g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pg = g.data<const T>();
      auto pgx = gx.data<T>();
      for (i64 b = 0; b < B; ++b)
        for (i64 u = 0; u < k; ++u)
          pgx[static_cast<size_t>(b * E + indices[static_cast<size_t>(b * k + u)])] +=
              pg[static_cast<size_t>(b * k + u)];
      return 0;
    });
    t.accumulate(nx, gx);
  });
}

Tensor scatter_rows(const Tensor& v, const std::vector<i64>& idx, i64 e) {
  if (v.rank() != 2) fail("scatter_rows: expected [B,k], got " + shape_str(v.shape()));
  i64 B = v.dim(0), k = v.dim(1);
  if (static_cast<i64>(idx.size()) != B * k) fail("scatter_rows: index count mismatch");
  Tensor out(Shape{B, e}, v.dtype());
  dispatch(v.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto pv = v.data<const T>();
    auto po = out.data<T>();
    for (i64 b = 0; b < B; ++b)
      for (i64 u = 0; u < k; ++u) {
        i64 dst = idx[static_cast<size_t>(b * k + u)];
        if (dst < 0 || dst >= e) fail("scatter_rows: index out of range");
        po[static_cast<size_t>(b * e + dst)] = pv[static_cast<size_t>(b * k + u)];
      }
    return 0;
  });
  int nv = v.node;
  auto indices = idx;
  return finish("scatter_rows", std::move(out), {nv}, [=](Tape& t, const Tensor& g) {
    if (nv < 0) return;
    Tensor gv(Shape{B, k}, g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pg = g.data<const T>();
      auto pgv = gv.data<T>();
      for (i64 b = 0; b < B; ++b)
        for (i64 u = 0; u < k; ++u)
          pgv[static_cast<size_t>(b * k + u)] =
              pg[static_cast<size_t>(b * e + indices[static_cast<size_t>(b * k + u)])];
      return 0;
    });
    t.accumulate(nv, gv);
  });
}

}  // namespace weft::ops
