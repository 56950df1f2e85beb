#pragma once

#include "weft/tape.hpp"
#include "weft/tensor.hpp"

namespace weft::ops {

enum class PadMode { Zero, Reflect };

// ---- elementwise (NumPy-style broadcasting on binary ops) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);

// ---- shape ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x, int ax0, int ax1);
Tensor concat(const std::vector<Tensor>& xs, int axis);
std::vector<Tensor> split(const Tensor& x, int axis, int parts);
Tensor slice(const Tensor& x, int axis, i64 start, i64 len);
Tensor pad2d(const Tensor& x, int pad, PadMode mode);  // [B,C,H,W], same pad on all sides
Tensor pad2d(const Tensor& x, int top, int bottom, int left, int right, PadMode mode);

// ---- reductions (single axis; compose for several) ----
Tensor sum(const Tensor& x, int axis, bool keepdim = false);
Tensor mean(const Tensor& x, int axis, bool keepdim = false);
Tensor var(const Tensor& x, int axis, bool keepdim = false);  // population (divide by n)
Tensor max(const Tensor& x, int axis, bool keepdim = false);  // ties -> lowest index
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor softmax(const Tensor& x, int axis);
// Normalization over the last axis with affine params gamma/beta of shape [C].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// x / sqrt(sum(x^2, last axis) + eps), for ESTO's channel normalization.
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);

// ---- linear algebra ----
// a: [..,M,K], b: [..,K,N] with identical leading dims (or both rank 2).
Tensor matmul(const Tensor& a, const Tensor& b);
// x: [..,C] @ w: [C,D] + b: [D]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- convolution / resampling ----
// x: [B,Cin,H,W], w: [Cout,Cin/groups,kh,kw], bias: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride = 1, int pad = -1,
              PadMode mode = PadMode::Zero, int groups = 1);  // pad -1 = k/2 ("same")
Tensor resize_bilinear(const Tensor& x, i64 out_h, i64 out_w);  // half-pixel centers
Tensor resize_nearest(const Tensor& x, i64 out_h, i64 out_w);
// map: [B,C,h,w]; coords: [B,Q,S,2] normalized (x,y) in [0,1], clamped; -> [B,Q,S,C].
// Coordinates map to pixel centers as x*(w-1), y*(h-1).
Tensor sample_bilinear(const Tensor& map, const Tensor& coords);

// ---- routing helpers (indices are forward-time constants) ----
// x: [B,E]; idx: row-major [B][k] -> [B,k]
Tensor gather_rows(const Tensor& x, const std::vector<i64>& idx, i64 k);
// v: [B,k] -> [B,E], zeros elsewhere
Tensor scatter_rows(const Tensor& v, const std::vector<i64>& idx, i64 e);

// ---- losses ----
// mean over elements of the numerically stable BCE-with-logits.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

}  // namespace weft::ops
