#pragma once

#include <array>
#include <memory>

#include "weft/parameter.hpp"

namespace weft {

// Multi-scale trainable tokens: the /8, /16 and /32 feature maps flattened
// and concatenated along the token axis. The layout round-trips tokens and
// maps losslessly.
struct TokenBundle {
  Tensor tokens;                            // [B, Ne, C]
  std::array<std::array<i64, 2>, 3> hw{};   // (h,w) per scale

  i64 expected_tokens() const {
    i64 n = 0;
    for (const auto& s : hw) n += s[0] * s[1];
    return n;
  }
  std::array<Tensor, 3> to_maps() const;
};

// Flattens three maps at /8, /16, /32 into one token bundle; `previous`
// (stage >= 2) is added elementwise.
TokenBundle assemble_tokens(const Tensor& f8, const Tensor& f16, const Tensor& f32,
                            const TokenBundle* previous = nullptr);

// Multi-scale deformable cross-attention that injects the trainable tokens
// into the frozen stream. Offsets and attention logits are predicted from
// each (layer-normalized) frozen query; both linear layers start at zero so
// the initial state samples the reference points with uniform weights.
class DeformInject {
 public:
  DeformInject(const std::string& prefix, i64 frozen_dim, i64 token_channels, i64 points, Rng rng,
               DType dt, ParamRegistry& reg);
  DeformInject(const DeformInject&) = delete;

  // frozen: [B,Nf,D] laid out on the (hf,wf) grid; returns the attended
  // value per query (no residual here; the residual lives in the ESTO tail).
  Tensor forward(const Tensor& frozen, i64 hf, i64 wf, const TokenBundle& bundle) const;

 private:
  Parameter lnq_g_, lnq_b_, lnv_g_, lnv_b_;
  Parameter offset_w_, offset_b_;
  Parameter attn_w_, attn_b_;
  Parameter value_w_, value_b_;
  Parameter out_w_, out_b_;
  i64 points_;
  i64 dim_;
};

struct EstoParams {
  i64 subspaces = 4;
  double rho = 1.0;
  double lambda = 1.0;
  double eps = 1e-6;
};

// Edge-aware subspace token optimizer: subspace token-to-token attention,
// variance-derived edge mask, learned gate, residual.
class Esto {
 public:
  Esto(const std::string& prefix, i64 dim, EstoParams params, Rng rng, DType dt, ParamRegistry& reg);
  Esto(const Esto&) = delete;

  Tensor forward(const Tensor& tokens) const;  // [B,N,C] -> [B,N,C]
  // The intermediate edge mask, for invariant tests.
  Tensor edge_mask(const Tensor& tokens) const;

  const EstoParams& params() const { return params_; }

 private:
  Parameter gate_w_, gate_b_;
  EstoParams params_;
  i64 dim_;
};

// Spatial-aware expert enhancer: fixed Laplacian, global-max, and multi-scale
// depthwise branches merged under softmax-constrained weights (shared across
// the three scales), followed by the bundle residual.
class See {
 public:
  See(const std::string& prefix, i64 channels, Rng rng, DType dt, ParamRegistry& reg);
  See(const See&) = delete;

  TokenBundle forward(const TokenBundle& bundle) const;
  Tensor merge_weights() const;  // softmax of the three logits, [3]

 private:
  Tensor laplacian_;  // fixed [C,1,3,3], not a parameter
  std::array<Parameter, 3> mso_dw_;   // depthwise 3/5/7
  std::array<Parameter, 3> mso_pw_w_; // pointwise mixers
  std::array<Parameter, 3> mso_pw_b_;
  Parameter merge_logits_;  // [3] -> softmax -> (w_d, w_a, w_m)
  i64 channels_;
};

// One EC adapter stage: inject -> ESTO on the frozen stream, SEE + residual
// on the trainable stream.
class EcAdapterStage {
 public:
  EcAdapterStage(const std::string& prefix, i64 frozen_dim, i64 token_channels, i64 points,
                 EstoParams esto_params, Rng rng, DType dt, ParamRegistry& reg);
  EcAdapterStage(const EcAdapterStage&) = delete;

  struct Out {
    Tensor refined_frozen;  // F~*, same shape as the frozen input
    TokenBundle next_bundle;
  };
  Out forward(const Tensor& frozen, i64 hf, i64 wf, const TokenBundle& bundle) const;

  const DeformInject& deform() const { return deform_; }
  const Esto& esto() const { return esto_; }
  const See& see() const { return see_; }

 private:
  DeformInject deform_;
  Esto esto_;
  See see_;
};

}  // namespace weft
