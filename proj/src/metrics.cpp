#include "weft/metrics.hpp"

#include <cmath>

namespace weft {

namespace {

struct PerImage {
  double iou, dice, mae, f;
};

PerImage image_metrics(const float* p, const float* y, i64 n) {
  i64 inter = 0, pred = 0, truth = 0;
  double mae = 0.0, psum = 0.0;
  for (i64 i = 0; i < n; ++i) {
    bool pb = p[i] >= 0.5f;
    bool yb = y[i] >= 0.5f;
    inter += pb && yb;
    pred += pb;
    truth += yb;
    mae += std::fabs(static_cast<double>(p[i]) - static_cast<double>(y[i]));
    psum += p[i];
  }
  i64 uni = pred + truth - inter;
  PerImage m;
  m.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  m.dice = pred + truth == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(pred + truth);
  m.mae = mae / static_cast<double>(n);

  // adaptive threshold, smooth weighted F to stay defined on empty sets
  double thresh = std::min(2.0 * psum / static_cast<double>(n), 1.0);
  double tp = 0, fp = 0, fn = 0;
  for (i64 i = 0; i < n; ++i) {
    bool pb = p[i] >= thresh;
    bool yb = y[i] >= 0.5f;
    tp += pb && yb;
    fp += pb && !yb;
    fn += !pb && yb;
  }
  const double b2 = 0.3;
  double denom = (1 + b2) * tp + b2 * fn + fp;
  m.f = denom == 0.0 ? 1.0 : (1 + b2) * tp / denom;
  return m;
}

template <class F>
void for_each_image(const Tensor& probs, const Tensor& masks, F&& f) {
  if (probs.shape() != masks.shape() || probs.rank() != 4)
    fail("metrics: probs/masks must share a [B,1,H,W] shape, got " + shape_str(probs.shape()) + " vs " +
         shape_str(masks.shape()));
  if (probs.dtype() != DType::F32 || masks.dtype() != DType::F32)
    fail("metrics: expected f32 tensors");
  i64 B = probs.dim(0), n = probs.numel() / B;
  auto p = probs.data<const float>();
  auto y = masks.data<const float>();
  for (i64 b = 0; b < B; ++b) f(image_metrics(p.data() + b * n, y.data() + b * n, n));
}

}  // namespace

Metrics compute_metrics(const Tensor& probs, const Tensor& masks) {
  MetricAccumulator acc;
  acc.add(probs, masks);
  return acc.mean();
}

void MetricAccumulator::add(const Tensor& probs, const Tensor& masks) {
  for_each_image(probs, masks, [&](const PerImage& m) {
    miou_ += m.iou;
    mdice_ += m.dice;
    mae_ += m.mae;
    f_ += m.f;
    ++n_;
  });
}

Metrics MetricAccumulator::mean() const {
  if (n_ == 0) fail("metrics: no images accumulated");
  Metrics m;
  m.miou = miou_ / static_cast<double>(n_);
  m.mdice = mdice_ / static_cast<double>(n_);
  m.mae = mae_ / static_cast<double>(n_);
  m.f_measure = f_ / static_cast<double>(n_);
  return m;
}

}  // namespace weft
