#include "weft/wavelet.hpp"

#include "ops_common.hpp"

namespace weft {

namespace {

using ops::detail::dispatch;
using ops::detail::finish;

// Forward Haar analysis into four planes, no tape involvement.
template <class T>
void dwt_kernel(const T* x, T* ll, T* lh, T* hl, T* hh, i64 planes, i64 H, i64 W) {
  i64 h2 = H / 2, w2 = W / 2;
  parallel_for(planes, [&](i64 p) {
    const T* src = x + p * H * W;
    T* pll = ll + p * h2 * w2;
    T* plh = lh + p * h2 * w2;
    T* phl = hl + p * h2 * w2;
    T* phh = hh + p * h2 * w2;
    for (i64 i = 0; i < h2; ++i) {
      const T* r0 = src + (2 * i) * W;
      const T* r1 = src + (2 * i + 1) * W;
      for (i64 j = 0; j < w2; ++j) {
        T a = r0[2 * j], b = r0[2 * j + 1], c = r1[2 * j], d = r1[2 * j + 1];
        pll[i * w2 + j] = static_cast<T>(0.5) * (a + b + c + d);
        phl[i * w2 + j] = static_cast<T>(0.5) * (a - b + c - d);  // high along width
        plh[i * w2 + j] = static_cast<T>(0.5) * (a + b - c - d);  // high along height
        phh[i * w2 + j] = static_cast<T>(0.5) * (a - b - c + d);
      }
    }
  });
}

template <class T>
void idwt_kernel(const T* ll, const T* lh, const T* hl, const T* hh, T* x, i64 planes, i64 H, i64 W) {
  i64 h2 = H / 2, w2 = W / 2;
  parallel_for(planes, [&](i64 p) {
    T* dst = x + p * H * W;
    const T* pll = ll + p * h2 * w2;
    const T* plh = lh + p * h2 * w2;
    const T* phl = hl + p * h2 * w2;
    const T* phh = hh + p * h2 * w2;
    for (i64 i = 0; i < h2; ++i) {
      T* r0 = dst + (2 * i) * W;
      T* r1 = dst + (2 * i + 1) * W;
      for (i64 j = 0; j < w2; ++j) {
        T vll = pll[i * w2 + j], vlh = plh[i * w2 + j], vhl = phl[i * w2 + j], vhh = phh[i * w2 + j];
        r0[2 * j] = static_cast<T>(0.5) * (vll + vhl + vlh + vhh);
        r0[2 * j + 1] = static_cast<T>(0.5) * (vll - vhl + vlh - vhh);
        r1[2 * j] = static_cast<T>(0.5) * (vll + vhl - vlh - vhh);
        r1[2 * j + 1] = static_cast<T>(0.5) * (vll - vhl - vlh + vhh);
      }
    }
  });
}

Subbands dwt_raw(const Tensor& x) {
  i64 B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Shape sub{B, C, H / 2, W / 2};
  Subbands s{Tensor(sub, x.dtype()), Tensor(sub, x.dtype()), Tensor(sub, x.dtype()), Tensor(sub, x.dtype())};
  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    dwt_kernel<T>(x.data<const T>().data(), s.ll.data<T>().data(), s.lh.data<T>().data(),
                  s.hl.data<T>().data(), s.hh.data<T>().data(), B * C, H, W);
    return 0;
  });
  return s;
}

Tensor idwt_raw(const Subbands& s) {
  i64 B = s.ll.dim(0), C = s.ll.dim(1), h2 = s.ll.dim(2), w2 = s.ll.dim(3);
  Tensor x(Shape{B, C, 2 * h2, 2 * w2}, s.ll.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = typename decltype(tag)::type;
    idwt_kernel<T>(s.ll.data<const T>().data(), s.lh.data<const T>().data(), s.hl.data<const T>().data(),
                   s.hh.data<const T>().data(), x.data<T>().data(), B * C, 2 * h2, 2 * w2);
    return 0;
  });
  return x;
}

}  // namespace

Subbands haar_dwt2(const Tensor& x) {
  if (x.rank() != 4) fail("haar_dwt2: expected [B,C,H,W], got " + shape_str(x.shape()));
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
    fail("haar_dwt2: H and W must be even for " + shape_str(x.shape()) +
         "; reflect-pad the input first (ops::pad2d)");
  Subbands s = dwt_raw(x);
  int nx = x.node;
  Tape* tape = Tape::current();
  if (!tape || nx < 0) return s;

  // One node per subband; the transform is orthogonal, so the input gradient
  // is the inverse transform of the subband gradients. Subbands without a
  // gradient contribute zeros.
  auto route = [nx](Tape& t, const Tensor& g, int which, const Shape& sub_shape) {
    Subbands gs{Tensor(sub_shape, g.dtype()), Tensor(sub_shape, g.dtype()), Tensor(sub_shape, g.dtype()),
                Tensor(sub_shape, g.dtype())};
    (which == 0 ? gs.ll : which == 1 ? gs.lh : which == 2 ? gs.hl : gs.hh) = g;
    t.accumulate(nx, idwt_raw(gs));
  };
  Shape sub_shape = s.ll.shape();
  s.ll = finish("haar_dwt2.ll", std::move(s.ll), {nx},
                [=](Tape& t, const Tensor& g) { route(t, g, 0, sub_shape); });
  s.lh = finish("haar_dwt2.lh", std::move(s.lh), {nx},
                [=](Tape& t, const Tensor& g) { route(t, g, 1, sub_shape); });
  s.hl = finish("haar_dwt2.hl", std::move(s.hl), {nx},
                [=](Tape& t, const Tensor& g) { route(t, g, 2, sub_shape); });
  s.hh = finish("haar_dwt2.hh", std::move(s.hh), {nx},
                [=](Tape& t, const Tensor& g) { route(t, g, 3, sub_shape); });
  return s;
}

Tensor haar_idwt2(const Subbands& s) {
  const Shape& ref = s.ll.shape();
  if (s.lh.shape() != ref || s.hl.shape() != ref || s.hh.shape() != ref)
    fail("haar_idwt2: subband shape mismatch: ll " + shape_str(s.ll.shape()) + ", lh " +
         shape_str(s.lh.shape()) + ", hl " + shape_str(s.hl.shape()) + ", hh " + shape_str(s.hh.shape()));
  if (s.ll.rank() != 4) fail("haar_idwt2: expected [B,C,h,w] subbands, got " + shape_str(ref));
  Tensor x = idwt_raw(s);
  int nll = s.ll.node, nlh = s.lh.node, nhl = s.hl.node, nhh = s.hh.node;
  return finish("haar_idwt2", std::move(x), {nll, nlh, nhl, nhh}, [=](Tape& t, const Tensor& g) {
    Subbands gs = dwt_raw(g);
    t.accumulate(nll, gs.ll);
    t.accumulate(nlh, gs.lh);
    t.accumulate(nhl, gs.hl);
    t.accumulate(nhh, gs.hh);
  });
}

Tensor wavelet_conv(const Tensor& x, const WaveletConvWeights& w) {
  i64 C = x.dim(1);
  for (const Tensor* k : {&w.ll, &w.lh, &w.hl, &w.hh}) {
    if (k->rank() != 4 || k->dim(0) != C || k->dim(1) != 1)
      fail("wavelet_conv: subband kernels must be depthwise [C,1,k,k] with C=" + std::to_string(C) +
           ", got " + shape_str(k->shape()));
    if (k->dim(2) % 2 == 0 || k->dim(2) != k->dim(3))
      fail("wavelet_conv: kernel must be square with odd size, got " + shape_str(k->shape()));
  }
  Subbands s = haar_dwt2(x);
  int groups = static_cast<int>(C);
  Subbands f{ops::conv2d(s.ll, w.ll, Tensor(), 1, -1, ops::PadMode::Zero, groups),
             ops::conv2d(s.lh, w.lh, Tensor(), 1, -1, ops::PadMode::Zero, groups),
             ops::conv2d(s.hl, w.hl, Tensor(), 1, -1, ops::PadMode::Zero, groups),
             ops::conv2d(s.hh, w.hh, Tensor(), 1, -1, ops::PadMode::Zero, groups)};
  return haar_idwt2(f);
}

WaveletConv::WaveletConv(const std::string& prefix, i64 channels, i64 kernel, Rng rng, DType dt,
                         ParamRegistry& reg) {
  auto make = [&](const char* sub, Parameter& p) {
    p.name = prefix + ".wc." + sub;
    p.tensor = init::conv_weight(rng.fork(p.name), {channels, 1, kernel, kernel}, dt);
    reg.add(&p);
  };
  make("ll", ll_);
  make("lh", lh_);
  make("hl", hl_);
  make("hh", hh_);
}

Tensor WaveletConv::forward(const Tensor& x) const { return wavelet_conv(x, weights()); }

}  // namespace weft
