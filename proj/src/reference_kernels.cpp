#include "weft/reference_kernels.hpp"

#include <cmath>

namespace weft::ref {

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad, int groups) {
  i64 B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  i64 Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  i64 cin_g = Cin / groups, cout_g = Cout / groups;
  if (pad < 0) pad = static_cast<int>(kh / 2);
  i64 Ho = (H + 2 * pad - kh) / stride + 1;
  i64 Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor out(Shape{B, Cout, Ho, Wo}, x.dtype());
  for (i64 b = 0; b < B; ++b)
    for (i64 co = 0; co < Cout; ++co)
      for (i64 oh = 0; oh < Ho; ++oh)
        for (i64 ow = 0; ow < Wo; ++ow) {
          double acc = 0.0;
          i64 g = co / cout_g;
          for (i64 cg = 0; cg < cin_g; ++cg)
            for (i64 p = 0; p < kh; ++p)
              for (i64 q = 0; q < kw; ++q) {
                i64 ih = oh * stride - pad + p;
                i64 iw = ow * stride - pad + q;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += w.at(((co * cin_g + cg) * kh + p) * kw + q) *
                       x.at(((b * Cin + g * cin_g + cg) * H + ih) * W + iw);
              }
          out.set(((b * Cout + co) * Ho + oh) * Wo + ow, acc);
        }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  i64 M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor out(Shape{M, N}, a.dtype());
  for (i64 i = 0; i < M; ++i)
    for (i64 j = 0; j < N; ++j) {
      double acc = 0.0;
      for (i64 k = 0; k < K; ++k) acc += a.at(i * K + k) * b.at(k * N + j);
      out.set(i * N + j, acc);
    }
  return out;
}

Tensor softmax_lastaxis(const Tensor& x) {
  i64 C = x.dim(x.rank() - 1);
  i64 rows = x.numel() / C;
  Tensor out(x.shape(), x.dtype());
  for (i64 r = 0; r < rows; ++r) {
    double m = -1e300;
    for (i64 c = 0; c < C; ++c) m = std::max(m, x.at(r * C + c));
    double denom = 0.0;
    for (i64 c = 0; c < C; ++c) denom += std::exp(x.at(r * C + c) - m);
    for (i64 c = 0; c < C; ++c) out.set(r * C + c, std::exp(x.at(r * C + c) - m) / denom);
  }
  return out;
}

std::vector<Tensor> haar_dwt2(const Tensor& x) {
  i64 B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Shape sub{B, C, H / 2, W / 2};
  std::vector<Tensor> s(4, Tensor(sub, x.dtype()));
  for (int i = 1; i < 4; ++i) s[static_cast<size_t>(i)] = Tensor(sub, x.dtype());
  i64 h2 = H / 2, w2 = W / 2;
  for (i64 p = 0; p < B * C; ++p)
    for (i64 i = 0; i < h2; ++i)
      for (i64 j = 0; j < w2; ++j) {
        double a = x.at((p * H + 2 * i) * W + 2 * j);
        double b = x.at((p * H + 2 * i) * W + 2 * j + 1);
        double c = x.at((p * H + 2 * i + 1) * W + 2 * j);
        double d = x.at((p * H + 2 * i + 1) * W + 2 * j + 1);
        i64 o = (p * h2 + i) * w2 + j;
        s[0].set(o, 0.5 * (a + b + c + d));
        s[1].set(o, 0.5 * (a + b - c - d));
        s[2].set(o, 0.5 * (a - b + c - d));
        s[3].set(o, 0.5 * (a - b - c + d));
      }
  return s;
}

Tensor haar_idwt2(const std::vector<Tensor>& s) {
  i64 B = s[0].dim(0), C = s[0].dim(1), h2 = s[0].dim(2), w2 = s[0].dim(3);
  i64 H = 2 * h2, W = 2 * w2;
  Tensor x(Shape{B, C, H, W}, s[0].dtype());
  for (i64 p = 0; p < B * C; ++p)
    for (i64 i = 0; i < h2; ++i)
      for (i64 j = 0; j < w2; ++j) {
        i64 o = (p * h2 + i) * w2 + j;
        double ll = s[0].at(o), lh = s[1].at(o), hl = s[2].at(o), hh = s[3].at(o);
        x.set((p * H + 2 * i) * W + 2 * j, 0.5 * (ll + hl + lh + hh));
        x.set((p * H + 2 * i) * W + 2 * j + 1, 0.5 * (ll - hl + lh - hh));
        x.set((p * H + 2 * i + 1) * W + 2 * j, 0.5 * (ll + hl - lh - hh));
        x.set((p * H + 2 * i + 1) * W + 2 * j + 1, 0.5 * (ll - hl - lh + hh));
      }
  return x;
}

}  // namespace weft::ref
