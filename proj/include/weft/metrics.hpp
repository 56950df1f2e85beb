#pragma once

#include "weft/tensor.hpp"

namespace weft {

// Binary segmentation metrics. mIoU/mDice binarize predictions at 0.5; MAE
// runs on raw probabilities; the F-measure uses beta^2 = 0.3 at the adaptive
// threshold min(2*mean(p), 1), averaged per image.
struct Metrics {
  double miou = 0.0;
  double mdice = 0.0;
  double mae = 0.0;
  double f_measure = 0.0;
};

// probs in [0,1], masks binary, both [B,1,H,W]. Per-image metrics averaged
// over the batch.
Metrics compute_metrics(const Tensor& probs, const Tensor& masks);

// Accumulates per-image metrics across batches of an evaluation split.
class MetricAccumulator {
 public:
  void add(const Tensor& probs, const Tensor& masks);
  Metrics mean() const;
  i64 count() const { return n_; }

 private:
  double miou_ = 0, mdice_ = 0, mae_ = 0, f_ = 0;
  i64 n_ = 0;
};

}  // namespace weft
