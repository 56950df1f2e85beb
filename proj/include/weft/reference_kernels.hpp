#pragma once

#include "weft/tensor.hpp"

namespace weft::ref {

// Straight-line single-threaded reference implementations, independent of the
// ops layer and the tape. Tests cross-check the parallel kernels against
// these; tools/bench_kernels compares their timings.

// x: [B,Cin,H,W], w: [Cout,Cin/g,k,k], zero padding k/2 unless pad given.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride = 1, int pad = -1, int groups = 1);

Tensor matmul(const Tensor& a, const Tensor& b);  // rank-2 only

Tensor softmax_lastaxis(const Tensor& x);

// Orthonormal Haar pair, identical conventions to weft::haar_dwt2/idwt2.
// Returns {ll, lh, hl, hh}.
std::vector<Tensor> haar_dwt2(const Tensor& x);
Tensor haar_idwt2(const std::vector<Tensor>& s);

}  // namespace weft::ref
