#include <memory>

#include "weft/adapter.hpp"
#include "weft/gradcheck.hpp"
#include "weft/loss.hpp"
#include "weft/model.hpp"
#include "weft/ops.hpp"
#include "weft/twe.hpp"
#include "weft/wavelet.hpp"

namespace weft {

namespace op = ops;

namespace {

Tensor rnd(Rng& rng, Shape shape, DType dt, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape), dt);
  for (i64 i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

// Weighted square sum so every output element contributes with a distinct
// coefficient.
Tensor to_scalar(const Tensor& y) {
  Tensor w(y.shape(), y.dtype());
  for (i64 i = 0; i < w.numel(); ++i) w.set(i, 0.25 + 0.05 * static_cast<double>(i % 11));
  return op::sum_all(op::mul(op::mul(y, y), w));
}

using Make = std::pair<Tensor, std::function<Tensor(const Tensor&)>>;

std::vector<GradCheckCase> build_cases() {
  std::vector<GradCheckCase> cases;

  cases.push_back({"conv2d", "conv2d/input", [](u64 seed, DType dt) -> Make {
                     Rng rng(seed);
                     Tensor w = rnd(rng, {3, 2, 3, 3}, dt);
                     Tensor b = rnd(rng, {3}, dt);
                     Tensor x = rnd(rng, {1, 2, 6, 6}, dt);
                     return {x, [w, b](const Tensor& t) {
                               return to_scalar(op::conv2d(t, w, b, 2));
                             }};
                   }});
  cases.push_back({"conv2d", "conv2d/weights", [](u64 seed, DType dt) -> Make {
                     Rng rng(seed);
                     Tensor x = rnd(rng, {1, 2, 5, 5}, dt);
                     Tensor w = rnd(rng, {2, 2, 3, 3}, dt);
                     return {w, [x](const Tensor& t) {
                               return to_scalar(op::conv2d(x, t, Tensor(), 1, -1, op::PadMode::Reflect));
                             }};
                   }});
  cases.push_back({"matmul", "matmul/lhs", [](u64 seed, DType dt) -> Make {
                     Rng rng(seed);
                     Tensor b = rnd(rng, {2, 2, 4, 3}, dt);
                     Tensor a = rnd(rng, {2, 2, 3, 4}, dt);
                     return {a, [b](const Tensor& t) { return to_scalar(op::matmul(t, b)); }};
                   }});
  cases.push_back({"normalization", "softmax+layer_norm", [](u64 seed, DType dt) -> Make {
                     Rng rng(seed);
                     Tensor g = rnd(rng, {6}, dt, 0.5, 1.5);
                     Tensor be = rnd(rng, {6}, dt);
                     Tensor x = rnd(rng, {3, 6}, dt);
                     return {x, [g, be](const Tensor& t) {
                               return to_scalar(op::softmax(op::layer_norm(t, g, be), 1));
                             }};
                   }});
  cases.push_back({"activation", "sigmoid+gelu", [](u64 seed, DType dt) -> Make {
                     Rng rng(seed);
                     Tensor x = rnd(rng, {2, 7}, dt, -2, 2);
                     return {x, [](const Tensor& t) { return to_scalar(op::gelu(op::sigmoid(t))); }};
                   }});
  cases.push_back({"reduction", "mean+var+max", [](u64 seed, DType dt) -> Make {
                     Rng rng(seed);
                     Tensor x = rnd(rng, {3, 5}, dt);
                     return {x, [](const Tensor& t) {
                               Tensor m = op::mean(t, 1);
                               Tensor v = op::var(t, 1);
                               Tensor mx = op::max(t, 1);
                               return to_scalar(op::concat({m, v, mx}, 0));
                             }};
                   }});
  cases.push_back({"haar", "dwt+idwt", [](u64 seed, DType dt) -> Make {
                     Rng rng(seed);
                     Tensor x = rnd(rng, {1, 2, 4, 4}, dt);
                     return {x, [](const Tensor& t) {
                               Subbands s = haar_dwt2(t);
                               Tensor mixed = op::add(op::mul(s.hh, s.ll), s.lh);
                               Subbands s2{s.ll, mixed, s.hl, s.hh};
                               return to_scalar(haar_idwt2(s2));
                             }};
                   }});
  cases.push_back({"wavelet_conv", "wavelet_conv/input", [](u64 seed, DType dt) -> Make {
                     Rng rng(seed);
                     WaveletConvWeights w{rnd(rng, {2, 1, 3, 3}, dt), rnd(rng, {2, 1, 3, 3}, dt),
                                          rnd(rng, {2, 1, 3, 3}, dt), rnd(rng, {2, 1, 3, 3}, dt)};
                     Tensor x = rnd(rng, {1, 2, 8, 8}, dt);
                     return {x, [w](const Tensor& t) { return to_scalar(wavelet_conv(t, w)); }};
                   }});
  cases.push_back({"wavelet_conv", "wavelet_conv/kernels", [](u64 seed, DType dt) -> Make {
                     Rng rng(seed);
                     Tensor x = rnd(rng, {1, 2, 6, 6}, dt);
                     WaveletConvWeights w{rnd(rng, {2, 1, 3, 3}, dt), rnd(rng, {2, 1, 3, 3}, dt),
                                          rnd(rng, {2, 1, 3, 3}, dt), rnd(rng, {2, 1, 3, 3}, dt)};
                     return {w.ll, [x, w](const Tensor& t) {
                               WaveletConvWeights ww{t, w.lh, w.hl, w.hh};
                               return to_scalar(wavelet_conv(x, ww));
                             }};
                   }});
  cases.push_back({"router", "router_fusion", [](u64 seed, DType dt) -> Make {
                     auto reg = std::make_shared<ParamRegistry>();
                     auto stage = std::make_shared<TweStage>("gc", 4, 2, Rng(seed * 3 + 1), dt, *reg);
                     // separate the gate so top-k selection is stable under eps
                     Tensor& gb = reg->find("gc.gate.b")->tensor;
                     const double logits[7] = {1.4, -0.6, 0.8, 2.1, -1.2, 0.2, -1.9};
                     for (i64 i = 0; i < 7; ++i) gb.set(i, logits[i]);
                     Rng rng(seed);
                     Tensor x = rnd(rng, {1, 4, 4, 4}, dt);
                     return {x, [reg, stage](const Tensor& t) {
                               auto [dec, out] = stage->forward(t);
                               return to_scalar(out);
                             }};
                   }});
  cases.push_back({"deform_inject", "deform/tokens", [](u64 seed, DType dt) -> Make {
                     auto reg = std::make_shared<ParamRegistry>();
                     auto deform =
                         std::make_shared<DeformInject>("gc", 4, 3, 2, Rng(seed * 5 + 2), dt, *reg);
                     Rng orng(seed + 9);
                     Tensor& ow = reg->find("gc.offset.w")->tensor;
                     for (i64 i = 0; i < ow.numel(); ++i) ow.set(i, orng.uniform(-0.04, 0.04));
                     Rng rng(seed);
                     Tensor frozen = rnd(rng, {1, 4, 4}, dt);
                     Tensor f8 = rnd(rng, {1, 3, 4, 4}, dt);
                     Tensor f16 = rnd(rng, {1, 3, 2, 2}, dt);
                     Tensor f32m = rnd(rng, {1, 3, 1, 1}, dt);
                     Tensor x = assemble_tokens(f8, f16, f32m).tokens;
                     TokenBundle proto = assemble_tokens(f8, f16, f32m);
                     return {x, [reg, deform, frozen, proto](const Tensor& t) {
                               TokenBundle b = proto;
                               b.tokens = t;
                               return to_scalar(deform->forward(frozen, 2, 2, b));
                             }};
                   }});
  cases.push_back({"deform_inject", "deform/offset_weights", [](u64 seed, DType dt) -> Make {
                     auto reg = std::make_shared<ParamRegistry>();
                     auto deform =
                         std::make_shared<DeformInject>("gc", 4, 3, 2, Rng(seed * 5 + 3), dt, *reg);
                     Rng rng(seed);
                     Tensor frozen = rnd(rng, {1, 4, 4}, dt);
                     TokenBundle bundle = assemble_tokens(rnd(rng, {1, 3, 4, 4}, dt), rnd(rng, {1, 3, 2, 2}, dt),
                                                          rnd(rng, {1, 3, 1, 1}, dt));
                     Parameter* ow = reg->find("gc.offset.w");
                     Tensor probe = rnd(rng, ow->tensor.shape(), dt, -0.05, 0.05);
                     return {probe, [reg, deform, frozen, bundle, ow](const Tensor& t) {
                               Tensor saved = ow->tensor;
                               ow->tensor = t;
                               Tensor out = deform->forward(frozen, 2, 2, bundle);
                               ow->tensor = saved;
                               return to_scalar(out);
                             }};
                   }});
  cases.push_back({"esto", "esto/tokens", [](u64 seed, DType dt) -> Make {
                     auto reg = std::make_shared<ParamRegistry>();
                     EstoParams p;
                     p.subspaces = 2;
                     auto esto = std::make_shared<Esto>("gc", 8, p, Rng(seed * 7 + 1), dt, *reg);
                     Rng rng(seed);
                     Tensor x = rnd(rng, {1, 4, 8}, dt);
                     return {x, [reg, esto](const Tensor& t) { return to_scalar(esto->forward(t)); }};
                   }});
  cases.push_back({"see", "see/tokens", [](u64 seed, DType dt) -> Make {
                     auto reg = std::make_shared<ParamRegistry>();
                     auto see = std::make_shared<See>("gc", 4, Rng(seed * 11 + 1), dt, *reg);
                     Rng rng(seed);
                     TokenBundle proto = assemble_tokens(rnd(rng, {1, 4, 4, 4}, dt), rnd(rng, {1, 4, 2, 2}, dt),
                                                         rnd(rng, {1, 4, 1, 1}, dt));
                     return {proto.tokens, [reg, see, proto](const Tensor& t) {
                               TokenBundle b = proto;
                               b.tokens = t;
                               return to_scalar(see->forward(b).tokens);
                             }};
                   }});
  cases.push_back({"decoder", "decoder/maps", [](u64 seed, DType dt) -> Make {
                     auto reg = std::make_shared<ParamRegistry>();
                     auto dec = std::make_shared<Decoder>("gc", 6, 4, 4, Rng(seed * 13 + 1), dt, *reg);
                     Rng rng(seed);
                     Tensor frozen_map = rnd(rng, {1, 6, 2, 2}, dt);
                     Tensor f16 = rnd(rng, {1, 4, 2, 2}, dt);
                     Tensor f32m = rnd(rng, {1, 4, 1, 1}, dt);
                     Tensor x = rnd(rng, {1, 4, 4, 4}, dt);
                     return {x, [reg, dec, frozen_map, f16, f32m](const Tensor& t) {
                               return to_scalar(dec->forward(frozen_map, {t, f16, f32m}, 8, 8));
                             }};
                   }});
  cases.push_back({"loss", "bce+dice/logits", [](u64 seed, DType dt) -> Make {
                     Rng rng(seed);
                     Tensor z = rnd(rng, {1, 1, 3, 3}, dt, -2, 2);
                     Tensor y(z.shape(), dt);
                     for (i64 i = 0; i < y.numel(); ++i) y.set(i, rng.uniform() < 0.5 ? 1.0 : 0.0);
                     return {z, [y](const Tensor& t) { return composite_loss(t, y, {}).total; }};
                   }});
  cases.push_back({"resample", "bilinear_resize+sample", [](u64 seed, DType dt) -> Make {
                     Rng rng(seed);
                     Tensor coords = rnd(rng, {1, 2, 3, 2}, dt, 0.25, 0.75);
                     Tensor x = rnd(rng, {1, 2, 4, 4}, dt);
                     return {x, [coords](const Tensor& t) {
                               Tensor up = op::resize_bilinear(t, 6, 6);
                               Tensor smp = op::sample_bilinear(t, coords);
                               return op::add(to_scalar(up), to_scalar(smp));
                             }};
                   }});

  return cases;
}

}  // namespace

const std::vector<GradCheckCase>& gradcheck_cases() {
  static const std::vector<GradCheckCase> cases = build_cases();
  return cases;
}

}  // namespace weft
