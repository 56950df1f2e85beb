#include "weft/loss.hpp"

#include "weft/ops.hpp"

namespace weft {

namespace op = ops;

LossParts composite_loss(const Tensor& logits, const Tensor& masks, const LossConfig& cfg) {
  if (logits.shape() != masks.shape())
    fail("composite_loss: shape mismatch " + shape_str(logits.shape()) + " vs " + shape_str(masks.shape()));
  if (cfg.beta <= 0 || cfg.gamma <= 0) fail("composite_loss: beta and gamma must be positive");
  for (i64 i = 0; i < masks.numel(); ++i) {
    double v = masks.at(i);
    if (v != 0.0 && v != 1.0)
      fail("composite_loss: mask must be binary, found " + std::to_string(v) + " at index " +
           std::to_string(i));
  }

  LossParts parts;
  parts.bce = op::bce_with_logits(logits, masks);

  Tensor p = op::sigmoid(logits);
  Tensor inter = op::sum_all(op::mul(p, masks));
  Tensor denom = op::add(op::sum_all(p), op::sum_all(masks));
  Tensor ratio = op::div(op::add_scalar(op::mul_scalar(inter, 2.0), cfg.smooth),
                         op::add_scalar(denom, cfg.smooth));
  parts.dice = op::add_scalar(op::mul_scalar(ratio, -1.0), 1.0);

  parts.total = op::add(op::mul_scalar(parts.bce, cfg.beta), op::mul_scalar(parts.dice, cfg.gamma));
  return parts;
}

}  // namespace weft
