#include <cmath>

#include "ops_common.hpp"

namespace weft::ops {

using detail::dispatch;
using detail::finish;

namespace {

struct AxisSplit {
  int axis;
  i64 outer, n, inner;
};

AxisSplit axis_split(const char* op, const Tensor& x, int axis) {
  int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) fail(std::string(op) + ": axis out of range for " + shape_str(x.shape()));
  AxisSplit s{axis, 1, x.dim(axis), 1};
  for (int d = 0; d < axis; ++d) s.outer *= x.dim(d);
  for (int d = axis + 1; d < r; ++d) s.inner *= x.dim(d);
  return s;
}

Shape reduced_shape(const Tensor& x, int axis, bool keepdim) {
  Shape os = x.shape();
  if (keepdim)
    os[static_cast<size_t>(axis)] = 1;
  else
    os.erase(os.begin() + axis);
  if (os.empty()) os = {1};
  return os;
}

}  // namespace

Tensor sum(const Tensor& x, int axis, bool keepdim) {
  auto s = axis_split("sum", x, axis);
  Tensor out(reduced_shape(x, s.axis, keepdim), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    auto po = out.data<T>();
    parallel_for(s.outer, [&](i64 o) {
      for (i64 i = 0; i < s.inner; ++i) {
        double acc = 0.0;  // 64-bit accumulation
        for (i64 j = 0; j < s.n; ++j) acc += static_cast<double>(px[static_cast<size_t>((o * s.n + j) * s.inner + i)]);
        po[static_cast<size_t>(o * s.inner + i)] = static_cast<T>(acc);
      }
    });
    return 0;
  });
  int nx = x.node;
  Shape in_shape = x.shape();
  return finish("sum", std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    if (nx < 0) return;
    Tensor gx(in_shape, g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pg = g.data<const T>();
      auto pgx = gx.data<T>();
      for (i64 o = 0; o < s.outer; ++o)
        for (i64 j = 0; j < s.n; ++j)
          for (i64 i = 0; i < s.inner; ++i)
            pgx[static_cast<size_t>((o * s.n + j) * s.inner + i)] = pg[static_cast<size_t>(o * s.inner + i)];
      return 0;
    });
    t.accumulate(nx, gx);
  });
}

Tensor mean(const Tensor& x, int axis, bool keepdim) {
  auto s = axis_split("mean", x, axis);
  return mul_scalar(sum(x, axis, keepdim), 1.0 / static_cast<double>(s.n));
}

Tensor var(const Tensor& x, int axis, bool keepdim) {
  auto s = axis_split("var", x, axis);
  Tensor out(reduced_shape(x, s.axis, keepdim), x.dtype());
  Tensor mu(out.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    auto po = out.data<T>();
    auto pm = mu.data<T>();
    parallel_for(s.outer, [&](i64 o) {
      for (i64 i = 0; i < s.inner; ++i) {
        double m = 0.0;
        for (i64 j = 0; j < s.n; ++j) m += static_cast<double>(px[static_cast<size_t>((o * s.n + j) * s.inner + i)]);
        m /= static_cast<double>(s.n);
        double v = 0.0;
        for (i64 j = 0; j < s.n; ++j) {
          double d = static_cast<double>(px[static_cast<size_t>((o * s.n + j) * s.inner + i)]) - m;
          v += d * d;
        }
        pm[static_cast<size_t>(o * s.inner + i)] = static_cast<T>(m);
        po[static_cast<size_t>(o * s.inner + i)] = static_cast<T>(v / static_cast<double>(s.n));
      }
    });
    return 0;
  });
  int nx = x.node;
  Tensor xc = x;
  return finish("var", std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    if (nx < 0) return;
    // d var / d x_j = 2 (x_j - mu) / n
    Tensor gx(xc.shape(), g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto px = xc.data<const T>();
      auto pm = mu.data<const T>();
      auto pg = g.data<const T>();
      auto pgx = gx.data<T>();
      double inv_n = 2.0 / static_cast<double>(s.n);
      for (i64 o = 0; o < s.outer; ++o)
        for (i64 j = 0; j < s.n; ++j)
          for (i64 i = 0; i < s.inner; ++i) {
            size_t xi = static_cast<size_t>((o * s.n + j) * s.inner + i);
            size_t ri = static_cast<size_t>(o * s.inner + i);
            pgx[xi] = static_cast<T>(static_cast<double>(pg[ri]) * inv_n *
                                     (static_cast<double>(px[xi]) - static_cast<double>(pm[ri])));
          }
      return 0;
    });
    t.accumulate(nx, gx);
  });
}

Tensor max(const Tensor& x, int axis, bool keepdim) {
  auto s = axis_split("max", x, axis);
  Tensor out(reduced_shape(x, s.axis, keepdim), x.dtype());
  std::vector<i64> argmax(static_cast<size_t>(s.outer * s.inner));
  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    auto po = out.data<T>();
    parallel_for(s.outer, [&](i64 o) {
      for (i64 i = 0; i < s.inner; ++i) {
        T best = px[static_cast<size_t>(o * s.n * s.inner + i)];
        i64 arg = 0;
        for (i64 j = 1; j < s.n; ++j) {
          T v = px[static_cast<size_t>((o * s.n + j) * s.inner + i)];
          if (v > best) {  // strict: ties keep the lowest index
            best = v;
            arg = j;
          }
        }
        po[static_cast<size_t>(o * s.inner + i)] = best;
        argmax[static_cast<size_t>(o * s.inner + i)] = arg;
      }
    });
    return 0;
  });
  int nx = x.node;
  Shape in_shape = x.shape();
  return finish("max", std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    if (nx < 0) return;
    Tensor gx(in_shape, g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pg = g.data<const T>();
      auto pgx = gx.data<T>();
      for (i64 o = 0; o < s.outer; ++o)
        for (i64 i = 0; i < s.inner; ++i) {
          i64 j = argmax[static_cast<size_t>(o * s.inner + i)];
          pgx[static_cast<size_t>((o * s.n + j) * s.inner + i)] = pg[static_cast<size_t>(o * s.inner + i)];
        }
      return 0;
    });
    t.accumulate(nx, gx);
  });
}

Tensor sum_all(const Tensor& x) {
  Tensor out(Shape{1}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    double acc = 0.0;
    for (i64 i = 0; i < x.numel(); ++i) acc += static_cast<double>(px[static_cast<size_t>(i)]);
    out.data<T>()[0] = static_cast<T>(acc);
    return 0;
  });
  int nx = x.node;
  Shape in_shape = x.shape();
  DType dt = x.dtype();
  return finish("sum_all", std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    if (nx >= 0) t.accumulate(nx, Tensor::full(in_shape, g.at(0), dt));
  });
}

Tensor mean_all(const Tensor& x) { return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

Tensor softmax(const Tensor& x, int axis) {
  auto s = axis_split("softmax", x, axis);
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    auto po = out.data<T>();
    parallel_for(s.outer, [&](i64 o) {
      for (i64 i = 0; i < s.inner; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (i64 j = 0; j < s.n; ++j)
          m = std::max(m, static_cast<double>(px[static_cast<size_t>((o * s.n + j) * s.inner + i)]));
        double denom = 0.0;
        for (i64 j = 0; j < s.n; ++j) {
          size_t xi = static_cast<size_t>((o * s.n + j) * s.inner + i);
          double e = std::exp(static_cast<double>(px[xi]) - m);
          po[xi] = static_cast<T>(e);
          denom += e;
        }
        for (i64 j = 0; j < s.n; ++j) {
          size_t xi = static_cast<size_t>((o * s.n + j) * s.inner + i);
          po[xi] = static_cast<T>(static_cast<double>(po[xi]) / denom);
        }
      }
    });
    return 0;
  });
  int nx = x.node;
  Tensor oc = out;
  return finish("softmax", std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    if (nx < 0) return;
    // dx = a * (g - sum(g * a, axis))
    Tensor gx(oc.shape(), g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pa = oc.data<const T>();
      auto pg = g.data<const T>();
      auto pgx = gx.data<T>();
      for (i64 o = 0; o < s.outer; ++o)
        for (i64 i = 0; i < s.inner; ++i) {
          double dot = 0.0;
          for (i64 j = 0; j < s.n; ++j) {
            size_t xi = static_cast<size_t>((o * s.n + j) * s.inner + i);
            dot += static_cast<double>(pg[xi]) * static_cast<double>(pa[xi]);
          }
          for (i64 j = 0; j < s.n; ++j) {
            size_t xi = static_cast<size_t>((o * s.n + j) * s.inner + i);
            pgx[xi] = static_cast<T>(static_cast<double>(pa[xi]) * (static_cast<double>(pg[xi]) - dot));
          }
        }
      return 0;
    });
    t.accumulate(nx, gx);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  int r = x.rank();
  i64 C = x.dim(r - 1);
  if (gamma.numel() != C || beta.numel() != C)
    fail("layer_norm: gamma/beta must have " + std::to_string(C) + " elements");
  detail::require_same_dtype("layer_norm", x, gamma);
  i64 rows = x.numel() / C;
  Tensor out(x.shape(), x.dtype());
  Tensor xhat(x.shape(), x.dtype());
  Tensor inv_std(Shape{rows}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    auto pgm = gamma.data<const T>();
    auto pbt = beta.data<const T>();
    auto po = out.data<T>();
    auto ph = xhat.data<T>();
    auto ps = inv_std.data<T>();
    parallel_for(rows, [&](i64 row) {
      const T* xr = px.data() + row * C;
      double m = 0.0;
      for (i64 c = 0; c < C; ++c) m += static_cast<double>(xr[c]);
      m /= static_cast<double>(C);
      double v = 0.0;
      for (i64 c = 0; c < C; ++c) {
        double d = static_cast<double>(xr[c]) - m;
        v += d * d;
      }
      v /= static_cast<double>(C);
      double is = 1.0 / std::sqrt(v + eps);
      ps[static_cast<size_t>(row)] = static_cast<T>(is);
      for (i64 c = 0; c < C; ++c) {
        double h = (static_cast<double>(xr[c]) - m) * is;
        ph[static_cast<size_t>(row * C + c)] = static_cast<T>(h);
        po[static_cast<size_t>(row * C + c)] =
            static_cast<T>(h * static_cast<double>(pgm[static_cast<size_t>(c)]) + static_cast<double>(pbt[static_cast<size_t>(c)]));
      }
    });
    return 0;
  });
  int nx = x.node, ng = gamma.node, nb = beta.node;
  Tensor gm = gamma;
  return finish("layer_norm", std::move(out), {nx, ng, nb}, [=](Tape& t, const Tensor& g) {
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pg = g.data<const T>();
      auto ph = xhat.data<const T>();
      auto ps = inv_std.data<const T>();
      auto pgm = gm.data<const T>();
      if (ng >= 0 || nb >= 0) {
        Tensor dgm(Shape{C}, g.dtype()), dbt(Shape{C}, g.dtype());
        auto pdg = dgm.data<T>();
        auto pdb = dbt.data<T>();
        for (i64 c = 0; c < C; ++c) {
          double sg = 0.0, sb = 0.0;
          for (i64 row = 0; row < rows; ++row) {
            size_t xi = static_cast<size_t>(row * C + c);
            sg += static_cast<double>(pg[xi]) * static_cast<double>(ph[xi]);
            sb += static_cast<double>(pg[xi]);
          }
          pdg[static_cast<size_t>(c)] = static_cast<T>(sg);
          pdb[static_cast<size_t>(c)] = static_cast<T>(sb);
        }
        if (ng >= 0) t.accumulate(ng, dgm);
        if (nb >= 0) t.accumulate(nb, dbt);
      }
      if (nx >= 0) {
        Tensor gx(xhat.shape(), g.dtype());
        auto pgx = gx.data<T>();
        for (i64 row = 0; row < rows; ++row) {
          double s1 = 0.0, s2 = 0.0;
          for (i64 c = 0; c < C; ++c) {
            size_t xi = static_cast<size_t>(row * C + c);
            double gy = static_cast<double>(pg[xi]) * static_cast<double>(pgm[static_cast<size_t>(c)]);
            s1 += gy;
            s2 += gy * static_cast<double>(ph[xi]);
          }
          s1 /= static_cast<double>(C);
          s2 /= static_cast<double>(C);
          double is = static_cast<double>(ps[static_cast<size_t>(row)]);
          for (i64 c = 0; c < C; ++c) {
            size_t xi = static_cast<size_t>(row * C + c);
            double gy = static_cast<double>(pg[xi]) * static_cast<double>(pgm[static_cast<size_t>(c)]);
            pgx[xi] = static_cast<T>(is * (gy - s1 - static_cast<double>(ph[xi]) * s2));
          }
        }
        t.accumulate(nx, gx);
      }
      return 0;
    });
  });
}

Tensor l2_normalize(const Tensor& x, double eps) {
  int r = x.rank();
  i64 C = x.dim(r - 1);
  i64 rows = x.numel() / C;
  Tensor out(x.shape(), x.dtype());
  Tensor inv_norm(Shape{rows}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto px = x.data<const T>();
    auto po = out.data<T>();
    auto pn = inv_norm.data<T>();
    parallel_for(rows, [&](i64 row) {
      const T* xr = px.data() + row * C;
      double ss = 0.0;
      for (i64 c = 0; c < C; ++c) ss += static_cast<double>(xr[c]) * static_cast<double>(xr[c]);
      double in = 1.0 / std::sqrt(ss + eps);
      pn[static_cast<size_t>(row)] = static_cast<T>(in);
      for (i64 c = 0; c < C; ++c) po[static_cast<size_t>(row * C + c)] = static_cast<T>(static_cast<double>(xr[c]) * in);
    });
    return 0;
  });
  int nx = x.node;
  Tensor xc = x;
  return finish("l2_normalize", std::move(out), {nx}, [=](Tape& t, const Tensor& g) {
    if (nx < 0) return;
    // y = x * inv; dx = inv * (g - y * dot(g, y))  with y = x*inv
    Tensor gx(xc.shape(), g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto px = xc.data<const T>();
      auto pg = g.data<const T>();
      auto pn = inv_norm.data<const T>();
      auto pgx = gx.data<T>();
      for (i64 row = 0; row < rows; ++row) {
        double in = static_cast<double>(pn[static_cast<size_t>(row)]);
        double dot = 0.0;
        for (i64 c = 0; c < C; ++c) {
          size_t xi = static_cast<size_t>(row * C + c);
          dot += static_cast<double>(pg[xi]) * static_cast<double>(px[xi]) * in;
        }
        for (i64 c = 0; c < C; ++c) {
          size_t xi = static_cast<size_t>(row * C + c);
          double y = static_cast<double>(px[xi]) * in;
          pgx[xi] = static_cast<T>(in * (static_cast<double>(pg[xi]) - y * dot));
        }
      }
      return 0;
    });
    t.accumulate(nx, gx);
  });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape())
    fail("bce_with_logits: shape mismatch " + shape_str(logits.shape()) + " vs " + shape_str(targets.shape()));
  detail::require_same_dtype("bce_with_logits", logits, targets);
  i64 n = logits.numel();
  Tensor out(Shape{1}, logits.dtype());
  dispatch(logits.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto pz = logits.data<const T>();
    auto py = targets.data<const T>();
    double acc = 0.0;
    for (i64 i = 0; i < n; ++i) {
      double z = static_cast<double>(pz[static_cast<size_t>(i)]);
      double y = static_cast<double>(py[static_cast<size_t>(i)]);
      acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
    }
    out.data<T>()[0] = static_cast<T>(acc / static_cast<double>(n));
    return 0;
  });
  int nz = logits.node;
  Tensor zc = logits, yc = targets;
  return finish("bce_with_logits", std::move(out), {nz}, [=](Tape& t, const Tensor& g) {
    if (nz < 0) return;
    Tensor gz(zc.shape(), g.dtype());
    double scale = g.at(0) / static_cast<double>(n);
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pz = zc.data<const T>();
      auto py = yc.data<const T>();
      auto pg = gz.data<T>();
      parallel_for(n, [&](i64 i) {
        size_t s = static_cast<size_t>(i);
        double z = static_cast<double>(pz[s]);
        double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        pg[s] = static_cast<T>(scale * (sig - static_cast<double>(py[s])));
      });
      return 0;
    });
    t.accumulate(nz, gz);
  });
}

}  // namespace weft::ops
