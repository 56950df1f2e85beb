#include "weft/optimizer.hpp"

#include <cmath>

namespace weft {

void AdamW::step(ParamRegistry& params) {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Parameter* p : params.all()) {
    if (p->frozen) {
      if (p->grad.defined())
        fail("optimizer: frozen parameter '" + p->name + "' received a gradient");
      continue;
    }
    if (!p->grad.defined()) continue;
    if (p->grad.shape() != p->tensor.shape())
      fail("optimizer: gradient shape mismatch for '" + p->name + "'");

    Moments& mom = state_[p->name];
    if (!mom.m.defined()) {
      mom.m = Tensor(p->tensor.shape(), p->tensor.dtype());
      mom.v = Tensor(p->tensor.shape(), p->tensor.dtype());
    }
    i64 n = p->tensor.numel();
    for (i64 i = 0; i < n; ++i) {
      double g = p->grad.at(i);
      double m = cfg_.beta1 * mom.m.at(i) + (1.0 - cfg_.beta1) * g;
      double v = cfg_.beta2 * mom.v.at(i) + (1.0 - cfg_.beta2) * g * g;
      mom.m.set(i, m);
      mom.v.set(i, v);
      double mhat = m / bc1;
      double vhat = v / bc2;
      double w = p->tensor.at(i);
      p->tensor.set(i, w - cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w));
    }
    p->grad = Tensor();
  }
}

}  // namespace weft
