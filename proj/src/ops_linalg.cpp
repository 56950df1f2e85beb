#include "ops_common.hpp"

namespace weft::ops {

using detail::dispatch;
using detail::finish;

namespace {

// C[M,N] += A[M,K] * B[K,N]; rows of C are independent.
template <class T>
void mm_nn(const T* a, const T* b, T* c, i64 M, i64 K, i64 N) {
  parallel_for(M, [&](i64 i) {
    T* crow = c + i * N;
    std::fill(crow, crow + N, static_cast<T>(0));
    const T* arow = a + i * K;
    for (i64 k = 0; k < K; ++k) {
      T aik = arow[k];
      const T* brow = b + k * N;
      for (i64 j = 0; j < N; ++j) crow[j] += aik * brow[j];
    }
  });
}

// C[M,K] = A[M,N] * B[K,N]^T  (dot of contiguous rows)
template <class T>
void mm_nt(const T* a, const T* b, T* c, i64 M, i64 N, i64 K) {
  parallel_for(M, [&](i64 i) {
    const T* arow = a + i * N;
    T* crow = c + i * K;
    for (i64 k = 0; k < K; ++k) {
      const T* brow = b + k * N;
      T acc = 0;
      for (i64 j = 0; j < N; ++j) acc += arow[j] * brow[j];
      crow[k] = acc;
    }
  });
}

// C[K,N] = A[M,K]^T * B[M,N]
template <class T>
void mm_tn(const T* a, const T* b, T* c, i64 M, i64 K, i64 N) {
  parallel_for(K, [&](i64 k) {
    T* crow = c + k * N;
    std::fill(crow, crow + N, static_cast<T>(0));
    for (i64 m = 0; m < M; ++m) {
      T amk = a[m * K + k];
      const T* brow = b + m * N;
      for (i64 j = 0; j < N; ++j) crow[j] += amk * brow[j];
    }
  });
}

struct MmDims {
  i64 batch, M, K, N;
};

MmDims matmul_dims(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank())
    fail("matmul: ranks must match and be >= 2, got " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  int r = a.rank();
  i64 batch = 1;
  for (int d = 0; d < r - 2; ++d) {
    if (a.dim(d) != b.dim(d))
      fail("matmul: leading dims differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    batch *= a.dim(d);
  }
  if (a.dim(r - 1) != b.dim(r - 2))
    fail("matmul: inner dims differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  return {batch, a.dim(r - 2), a.dim(r - 1), b.dim(r - 1)};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_same_dtype("matmul", a, b);
  MmDims d = matmul_dims(a, b);
  Shape os = a.shape();
  os[os.size() - 1] = d.N;
  os[os.size() - 2] = d.M;
  Tensor out(os, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    auto pa = a.data<const T>();
    auto pb = b.data<const T>();
    auto po = out.data<T>();
    for (i64 s = 0; s < d.batch; ++s)
      mm_nn(pa.data() + s * d.M * d.K, pb.data() + s * d.K * d.N, po.data() + s * d.M * d.N, d.M, d.K, d.N);
    return 0;
  });
  int na = a.node, nb = b.node;
  Tensor ac = a, bc = b;
  return finish("matmul", std::move(out), {na, nb}, [=](Tape& t, const Tensor& g) {
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pg = g.data<const T>();
      if (na >= 0) {
        Tensor ga(ac.shape(), g.dtype());
        auto pb = bc.data<const T>();
        auto pga = ga.data<T>();
        for (i64 s = 0; s < d.batch; ++s)
          mm_nt(pg.data() + s * d.M * d.N, pb.data() + s * d.K * d.N, pga.data() + s * d.M * d.K, d.M, d.N, d.K);
        t.accumulate(na, ga);
      }
      if (nb >= 0) {
        Tensor gb(bc.shape(), g.dtype());
        auto pa = ac.data<const T>();
        auto pgb = gb.data<T>();
        for (i64 s = 0; s < d.batch; ++s)
          mm_tn(pa.data() + s * d.M * d.K, pg.data() + s * d.M * d.N, pgb.data() + s * d.K * d.N, d.M, d.K, d.N);
        t.accumulate(nb, gb);
      }
      return 0;
    });
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2) fail("linear: weight must be [C,D], got " + shape_str(w.shape()));
  i64 C = w.dim(0), D = w.dim(1);
  if (x.dim(x.rank() - 1) != C)
    fail("linear: input feature dim " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
  Shape os = x.shape();
  os[os.size() - 1] = D;
  Tensor flat = reshape(x, {-1, C});
  Tensor y = matmul(flat, w);
  if (b.defined()) {
    if (b.numel() != D) fail("linear: bias must have " + std::to_string(D) + " elements");
    y = add(y, reshape(b, {1, D}));
  }
  return reshape(y, std::move(os));
}

// ---------------- conv2d ----------------

namespace {

struct ConvDims {
  i64 B, Cin, H, W, Cout, kh, kw, Ho, Wo;
  int stride, pad, groups;
  PadMode mode;
  i64 cin_g, cout_g;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad, PadMode mode, int groups) {
  if (x.rank() != 4) fail("conv2d: input must be [B,Cin,H,W], got " + shape_str(x.shape()));
  if (w.rank() != 4) fail("conv2d: weight must be [Cout,Cin/g,kh,kw], got " + shape_str(w.shape()));
  ConvDims d;
  d.B = x.dim(0);
  d.Cin = x.dim(1);
  d.H = x.dim(2);
  d.W = x.dim(3);
  d.Cout = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.groups = groups;
  d.mode = mode;
  if (groups < 1 || d.Cin % groups != 0 || d.Cout % groups != 0)
    fail("conv2d: groups=" + std::to_string(groups) + " must divide Cin=" + std::to_string(d.Cin) +
         " and Cout=" + std::to_string(d.Cout));
  d.cin_g = d.Cin / groups;
  d.cout_g = d.Cout / groups;
  if (w.dim(1) != d.cin_g)
    fail("conv2d: weight " + shape_str(w.shape()) + " inconsistent with Cin=" + std::to_string(d.Cin) +
         ", groups=" + std::to_string(groups));
  d.pad = pad < 0 ? static_cast<int>(d.kh / 2) : pad;
  if (stride < 1) fail("conv2d: stride must be >= 1");
  d.Ho = (d.H + 2 * d.pad - d.kh) / stride + 1;
  d.Wo = (d.W + 2 * d.pad - d.kw) / stride + 1;
  if (d.Ho < 1 || d.Wo < 1)
    fail("conv2d: kernel " + std::to_string(d.kh) + "x" + std::to_string(d.kw) + " too large for input " +
         shape_str(x.shape()) + " with pad " + std::to_string(d.pad));
  return d;
}

// Edge-repeating mirror, folded until in range so tiny maps stay defined.
inline i64 reflect_idx(i64 i, i64 n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

template <class T>
void conv_fwd(const ConvDims& d, const T* x, const T* w, const T* bias, T* y) {
  parallel_for(d.B * d.Cout, [&](i64 bc) {
    i64 b = bc / d.Cout, co = bc % d.Cout;
    i64 g = co / d.cout_g;
    const T* wbase = w + co * d.cin_g * d.kh * d.kw;
    T* ybase = y + (b * d.Cout + co) * d.Ho * d.Wo;
    T bv = bias ? bias[co] : static_cast<T>(0);
    for (i64 oh = 0; oh < d.Ho; ++oh) {
      for (i64 ow = 0; ow < d.Wo; ++ow) {
        T acc = bv;
        i64 ih0 = oh * d.stride - d.pad;
        i64 iw0 = ow * d.stride - d.pad;
        for (i64 cg = 0; cg < d.cin_g; ++cg) {
          const T* xch = x + ((b * d.Cin + g * d.cin_g + cg) * d.H) * d.W;
          const T* wch = wbase + cg * d.kh * d.kw;
          for (i64 p = 0; p < d.kh; ++p) {
            i64 ih = ih0 + p;
            if (d.mode == PadMode::Reflect) {
              ih = reflect_idx(ih, d.H);
            } else if (ih < 0 || ih >= d.H) {
              continue;
            }
            const T* xrow = xch + ih * d.W;
            const T* wrow = wch + p * d.kw;
            for (i64 q = 0; q < d.kw; ++q) {
              i64 iw = iw0 + q;
              if (d.mode == PadMode::Reflect) {
                iw = reflect_idx(iw, d.W);
              } else if (iw < 0 || iw >= d.W) {
                continue;
              }
              acc += wrow[q] * xrow[iw];
            }
          }
        }
        ybase[oh * d.Wo + ow] = acc;
      }
    }
  });
}

// Gradient wrt input, zero padding: gather form, parallel over (b, ci).
template <class T>
void conv_bwd_input_zero(const ConvDims& d, const T* w, const T* gy, T* gx) {
  parallel_for(d.B * d.Cin, [&](i64 bci) {
    i64 b = bci / d.Cin, ci = bci % d.Cin;
    i64 g = ci / d.cin_g, cg = ci % d.cin_g;
    T* gxb = gx + (b * d.Cin + ci) * d.H * d.W;
    for (i64 ih = 0; ih < d.H; ++ih) {
      for (i64 iw = 0; iw < d.W; ++iw) {
        T acc = 0;
        for (i64 p = 0; p < d.kh; ++p) {
          i64 ohs = ih + d.pad - p;
          if (ohs % d.stride != 0) continue;
          i64 oh = ohs / d.stride;
          if (oh < 0 || oh >= d.Ho) continue;
          for (i64 q = 0; q < d.kw; ++q) {
            i64 ows = iw + d.pad - q;
            if (ows % d.stride != 0) continue;
            i64 ow = ows / d.stride;
            if (ow < 0 || ow >= d.Wo) continue;
            for (i64 cog = 0; cog < d.cout_g; ++cog) {
              i64 co = g * d.cout_g + cog;
              acc += w[((co * d.cin_g + cg) * d.kh + p) * d.kw + q] *
                     gy[((b * d.Cout + co) * d.Ho + oh) * d.Wo + ow];
            }
          }
        }
        gxb[ih * d.W + iw] += acc;
      }
    }
  });
}

// Gradient wrt input, reflect padding: scatter through the reflection map,
// parallel over batch only (reflected taps collide within a sample).
template <class T>
void conv_bwd_input_reflect(const ConvDims& d, const T* w, const T* gy, T* gx) {
  parallel_for(d.B, [&](i64 b) {
    for (i64 co = 0; co < d.Cout; ++co) {
      i64 g = co / d.cout_g;
      const T* wbase = w + co * d.cin_g * d.kh * d.kw;
      const T* gyb = gy + (b * d.Cout + co) * d.Ho * d.Wo;
      for (i64 oh = 0; oh < d.Ho; ++oh) {
        for (i64 ow = 0; ow < d.Wo; ++ow) {
          T gv = gyb[oh * d.Wo + ow];
          if (gv == static_cast<T>(0)) continue;
          i64 ih0 = oh * d.stride - d.pad;
          i64 iw0 = ow * d.stride - d.pad;
          for (i64 cg = 0; cg < d.cin_g; ++cg) {
            T* gxch = gx + ((b * d.Cin + g * d.cin_g + cg) * d.H) * d.W;
            const T* wch = wbase + cg * d.kh * d.kw;
            for (i64 p = 0; p < d.kh; ++p) {
              i64 ih = reflect_idx(ih0 + p, d.H);
              for (i64 q = 0; q < d.kw; ++q) {
                i64 iw = reflect_idx(iw0 + q, d.W);
                gxch[ih * d.W + iw] += wch[p * d.kw + q] * gv;
              }
            }
          }
        }
      }
    }
  });
}

template <class T>
void conv_bwd_weight(const ConvDims& d, const T* x, const T* gy, T* gw) {
  parallel_for(d.Cout, [&](i64 co) {
    i64 g = co / d.cout_g;
    for (i64 cg = 0; cg < d.cin_g; ++cg) {
      for (i64 p = 0; p < d.kh; ++p) {
        for (i64 q = 0; q < d.kw; ++q) {
          double acc = 0.0;
          for (i64 b = 0; b < d.B; ++b) {
            const T* xch = x + ((b * d.Cin + g * d.cin_g + cg) * d.H) * d.W;
            const T* gyb = gy + (b * d.Cout + co) * d.Ho * d.Wo;
            for (i64 oh = 0; oh < d.Ho; ++oh) {
              i64 ih = oh * d.stride - d.pad + p;
              if (d.mode == PadMode::Reflect) {
                ih = reflect_idx(ih, d.H);
              } else if (ih < 0 || ih >= d.H) {
                continue;
              }
              const T* xrow = xch + ih * d.W;
              const T* gyrow = gyb + oh * d.Wo;
              for (i64 ow = 0; ow < d.Wo; ++ow) {
                i64 iw = ow * d.stride - d.pad + q;
                if (d.mode == PadMode::Reflect) {
                  iw = reflect_idx(iw, d.W);
                } else if (iw < 0 || iw >= d.W) {
                  continue;
                }
                acc += static_cast<double>(gyrow[ow]) * static_cast<double>(xrow[iw]);
              }
            }
          }
          gw[((co * d.cin_g + cg) * d.kh + p) * d.kw + q] = static_cast<T>(acc);
        }
      }
    }
  });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad, PadMode mode,
              int groups) {
  detail::require_same_dtype("conv2d", x, w);
  ConvDims d = conv_dims(x, w, stride, pad, mode, groups);
  Tensor out(Shape{d.B, d.Cout, d.Ho, d.Wo}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    conv_fwd<T>(d, x.data<const T>().data(), w.data<const T>().data(),
                bias.defined() ? bias.data<const T>().data() : nullptr, out.data<T>().data());
    return 0;
  });
  int nx = x.node, nw = w.node, nb = bias.defined() ? bias.node : -1;
  Tensor xc = x, wc = w;
  return finish("conv2d", std::move(out), {nx, nw, nb}, [=](Tape& t, const Tensor& g) {
    dispatch(g.dtype(), [&](auto tag) {
      using T = typename decltype(tag)::type;
      auto pg = g.data<const T>();
      if (nx >= 0) {
        Tensor gx(xc.shape(), g.dtype());
        if (d.mode == PadMode::Zero)
          conv_bwd_input_zero<T>(d, wc.data<const T>().data(), pg.data(), gx.data<T>().data());
        else
          conv_bwd_input_reflect<T>(d, wc.data<const T>().data(), pg.data(), gx.data<T>().data());
        t.accumulate(nx, gx);
      }
      if (nw >= 0) {
        Tensor gw(wc.shape(), g.dtype());
        conv_bwd_weight<T>(d, xc.data<const T>().data(), pg.data(), gw.data<T>().data());
        t.accumulate(nw, gw);
      }
      if (nb >= 0) {
        Tensor gb(Shape{d.Cout}, g.dtype());
        auto pgb = gb.data<T>();
        for (i64 co = 0; co < d.Cout; ++co) {
          double acc = 0.0;
          for (i64 b = 0; b < d.B; ++b) {
            const T* gyb = pg.data() + (b * d.Cout + co) * d.Ho * d.Wo;
            for (i64 i = 0; i < d.Ho * d.Wo; ++i) acc += static_cast<double>(gyb[i]);
          }
          pgb[static_cast<size_t>(co)] = static_cast<T>(acc);
        }
        t.accumulate(nb, gb);
      }
      return 0;
    });
  });
}

}  // namespace weft::ops
