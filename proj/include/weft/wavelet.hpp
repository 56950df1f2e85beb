#pragma once

#include "weft/ops.hpp"
#include "weft/parameter.hpp"

namespace weft {

// Single-level orthonormal 2D Haar analysis. Each coefficient is
// (+-a +-b +-c +-d)/2 over non-overlapping 2x2 blocks, so the transform is
// orthogonal: ||x||^2 equals the summed subband energy and the inverse is
// the transpose.
struct Subbands {
  Tensor ll, lh, hl, hh;  // each [B,C,H/2,W/2]
};

// x: [B,C,H,W] with even H and W; errors instruct the caller to reflect-pad
// odd inputs first (ops::pad2d).
Subbands haar_dwt2(const Tensor& x);
Tensor haar_idwt2(const Subbands& s);

// Depthwise kernels applied per subband between the analysis/synthesis pair.
// One tensor of shape [C,1,k,k] per subband, k odd.
struct WaveletConvWeights {
  Tensor ll, lh, hl, hh;
};

// WC_k(x) = IDWT(depthwise-conv_k(DWT(x))); output shape equals input shape.
Tensor wavelet_conv(const Tensor& x, const WaveletConvWeights& w);

// Trainable wavelet convolution module: owns the four kernel tensors, named
// "<prefix>.wc.{ll,lh,hl,hh}".
class WaveletConv {
 public:
  WaveletConv() = default;
  WaveletConv(const std::string& prefix, i64 channels, i64 kernel, Rng rng, DType dt,
              ParamRegistry& reg);

  Tensor forward(const Tensor& x) const;
  WaveletConvWeights weights() const { return {ll_.tensor, lh_.tensor, hl_.tensor, hh_.tensor}; }

 private:
  Parameter ll_, lh_, hl_, hh_;
};

}  // namespace weft
