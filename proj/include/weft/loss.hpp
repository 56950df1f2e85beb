#pragma once

#include "weft/tensor.hpp"

namespace weft {

struct LossConfig {
  double beta = 5.0;   // BCE weight
  double gamma = 2.0;  // Dice weight
  double smooth = 1.0; // Dice smoothing
};

struct LossParts {
  Tensor total;  // beta*bce + gamma*dice, scalar on tape
  Tensor bce;
  Tensor dice;
};

// logits, masks: [B,1,H,W]; masks must be strictly binary.
LossParts composite_loss(const Tensor& logits, const Tensor& masks, const LossConfig& cfg);

}  // namespace weft
