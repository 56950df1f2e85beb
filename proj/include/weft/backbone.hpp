#pragma once

#include <memory>

#include "weft/parameter.hpp"

namespace weft {

// Frozen stand-in for a large pretrained encoder: a stride-16 patch embed
// and four pre-norm transformer blocks with seeded random weights. The MLP
// width is deliberately large so the frozen side dominates the parameter
// count the way a foundation model would at full scale.
struct BackboneConfig {
  i64 dim = 64;
  i64 patch = 16;
  int blocks = 4;
  int heads = 4;
  i64 mlp_hidden = 5120;
  u64 seed = 0;
};

class FrozenBackbone {
 public:
  FrozenBackbone(const BackboneConfig& cfg, DType dt, ParamRegistry& reg);
  FrozenBackbone(const FrozenBackbone&) = delete;

  // image [B,3,H,W] -> tokens [B, (H/16)*(W/16), dim]
  Tensor patch_embed(const Tensor& image) const;
  // pre-norm self-attention + MLP block i (0-based)
  Tensor block(int i, const Tensor& tokens) const;

  const BackboneConfig& config() const { return cfg_; }

 private:
  struct Block {
    Parameter ln1_g, ln1_b, ln2_g, ln2_b;
    Parameter qkv_w, qkv_b, proj_w, proj_b;
    Parameter mlp1_w, mlp1_b, mlp2_w, mlp2_b;
  };
  BackboneConfig cfg_;
  Parameter embed_w_, embed_b_;
  std::vector<std::unique_ptr<Block>> blocks_;
};

}  // namespace weft
