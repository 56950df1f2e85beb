#include "weft/twe.hpp"

#include <algorithm>

namespace weft {

namespace op = ops;

std::vector<i64> topk_indices(const Tensor& scores, i64 k) {
  i64 B = scores.dim(0), E = scores.dim(1);
  if (k < 1 || k > E) fail("topk: k=" + std::to_string(k) + " outside 1.." + std::to_string(E));
  std::vector<i64> out(static_cast<size_t>(B * k));
  std::vector<i64> order(static_cast<size_t>(E));
  for (i64 b = 0; b < B; ++b) {
    for (i64 e = 0; e < E; ++e) order[static_cast<size_t>(e)] = e;
    std::stable_sort(order.begin(), order.end(), [&](i64 lhs, i64 rhs) {
      double a = scores.at(b * E + lhs), c = scores.at(b * E + rhs);
      if (a != c) return a > c;
      return lhs < rhs;  // ties -> lowest index
    });
    for (i64 u = 0; u < k; ++u) out[static_cast<size_t>(b * k + u)] = order[static_cast<size_t>(u)];
  }
  return out;
}

TweStage::TweStage(const std::string& prefix, i64 channels, i64 k_select, Rng rng, DType dt,
                   ParamRegistry& reg)
    : channels_(channels), k_(k_select) {
  if (channels % 4 != 0) fail("TweStage: channels must be divisible by 4, got " + std::to_string(channels));
  if (k_select < 1 || k_select > kExperts)
    fail("TweStage: k_select must be in 1..7, got " + std::to_string(k_select));
  i64 sub_c = channels / 4;
  experts_.reserve(kExperts);
  for (int n = 1; n <= kExperts; ++n) {
    auto e = std::make_unique<Expert>();
    i64 kernel = 2 * n - 1;
    std::string eprefix = prefix + ".expert" + std::to_string(n);
    e->chain.reserve(kChain);
    for (int c = 0; c < kChain; ++c)
      e->chain.push_back(std::make_unique<WaveletConv>(eprefix + ".link" + std::to_string(c + 1), sub_c,
                                                       kernel, rng, dt, reg));
    e->proj_w.name = eprefix + ".proj.w";
    e->proj_w.tensor = init::conv_weight(rng.fork(e->proj_w.name), {channels, channels, 1, 1}, dt);
    e->proj_b.name = eprefix + ".proj.b";
    e->proj_b.tensor = init::zeros({channels}, dt);
    reg.add(&e->proj_w);
    reg.add(&e->proj_b);
    experts_.push_back(std::move(e));
  }
  gate_w_.name = prefix + ".gate.w";
  gate_w_.tensor = init::truncated_normal(rng.fork(gate_w_.name), {kExperts, channels}, 0.02, dt);
  gate_b_.name = prefix + ".gate.b";
  gate_b_.tensor = init::zeros({kExperts}, dt);
  fuse_w_.name = prefix + ".fuse.w";
  fuse_w_.tensor = init::conv_weight(rng.fork(fuse_w_.name), {channels, channels, 1, 1}, dt);
  fuse_b_.name = prefix + ".fuse.b";
  fuse_b_.tensor = init::zeros({channels}, dt);
  reg.add(&gate_w_);
  reg.add(&gate_b_);
  reg.add(&fuse_w_);
  reg.add(&fuse_b_);
}

std::vector<Tensor> TweStage::build_experts(const Tensor& f_m) const {
  if (f_m.dim(1) != channels_)
    fail("build_experts: expected " + std::to_string(channels_) + " channels, got " + shape_str(f_m.shape()));
  i64 h = f_m.dim(2), w = f_m.dim(3);
  int pad_h = static_cast<int>(h % 2), pad_w = static_cast<int>(w % 2);
  // The Haar step needs even dims; reflect-pad odd maps and crop back after.
  auto wc = [&](const WaveletConv& conv, const Tensor& x) {
    if (pad_h == 0 && pad_w == 0) return conv.forward(x);
    Tensor y = conv.forward(op::pad2d(x, 0, pad_h, 0, pad_w, op::PadMode::Reflect));
    y = op::slice(y, 2, 0, h);
    return op::slice(y, 3, 0, w);
  };
  std::vector<Tensor> sub = op::split(f_m, 1, 4);
  std::vector<Tensor> out;
  out.reserve(kExperts);
  for (const auto& e : experts_) {
    Tensor prev;  // f~^0 = 0: first link sees its sub-feature alone
    std::vector<Tensor> links;
    links.reserve(kChain);
    for (int c = 0; c < kChain; ++c) {
      Tensor in = prev.defined() ? op::add(sub[static_cast<size_t>(c)], prev) : sub[static_cast<size_t>(c)];
      prev = wc(*e->chain[static_cast<size_t>(c)], in);
      links.push_back(prev);
    }
    Tensor cat = op::concat(links, 1);
    Tensor proj = op::conv2d(cat, e->proj_w.tensor, e->proj_b.tensor);
    out.push_back(op::add(proj, f_m));
  }
  return out;
}

std::pair<RoutingDecision, Tensor> TweStage::route_topk(const Tensor& f_m,
                                                        const std::vector<Tensor>& experts) const {
  if (experts.size() != kExperts) fail("route_topk: expected 7 experts");
  i64 B = f_m.dim(0), C = f_m.dim(1), h = f_m.dim(2), w = f_m.dim(3);

  Tensor gap = op::mean(op::mean(f_m, 3), 2);  // [B,C]
  Tensor logits = op::linear(gap, op::transpose(gate_w_.tensor, 0, 1), gate_b_.tensor);
  Tensor alpha = op::softmax(logits, 1);  // [B,7]

  RoutingDecision dec;
  dec.k = k_;
  dec.gate_probs = alpha;
  dec.selected = topk_indices(alpha, k_);
  Tensor picked = op::gather_rows(alpha, dec.selected, k_);
  dec.fused_weights = op::softmax(picked, 1);  // renormalize the selected gate probs

  Tensor dense = op::scatter_rows(dec.fused_weights, dec.selected, kExperts);  // [B,7]
  std::vector<Tensor> stacked;
  stacked.reserve(kExperts);
  for (const Tensor& e : experts) stacked.push_back(op::reshape(e, {B, 1, C, h, w}));
  Tensor bank = op::concat(stacked, 1);                                   // [B,7,C,h,w]
  Tensor mix = op::mul(bank, op::reshape(dense, {B, kExperts, 1, 1, 1}));  // broadcast
  Tensor fused = op::sum(mix, 1);                                          // [B,C,h,w]
  Tensor out = op::conv2d(op::add(f_m, fused), fuse_w_.tensor, fuse_b_.tensor);
  return {std::move(dec), std::move(out)};
}

std::pair<RoutingDecision, Tensor> TweStage::forward(const Tensor& f_m) const {
  return route_topk(f_m, build_experts(f_m));
}

TweExtractor::TweExtractor(i64 channels, i64 k_select, Rng rng, DType dt, ParamRegistry& reg)
    : channels_(channels) {
  stem1_w_.name = "twe.stem.conv1.w";
  stem1_w_.tensor = init::conv_weight(rng.fork(stem1_w_.name), {channels, 3, 3, 3}, dt);
  stem1_b_.name = "twe.stem.conv1.b";
  stem1_b_.tensor = init::zeros({channels}, dt);
  stem2_w_.name = "twe.stem.conv2.w";
  stem2_w_.tensor = init::conv_weight(rng.fork(stem2_w_.name), {channels, channels, 3, 3}, dt);
  stem2_b_.name = "twe.stem.conv2.b";
  stem2_b_.tensor = init::zeros({channels}, dt);
  reg.add(&stem1_w_);
  reg.add(&stem1_b_);
  reg.add(&stem2_w_);
  reg.add(&stem2_b_);

  stages_.reserve(4);
  for (int i = 1; i <= 4; ++i)
    stages_.push_back(
        std::make_unique<TweStage>("twe.stage" + std::to_string(i), channels, k_select, rng, dt, reg));
  for (int i = 2; i <= 4; ++i) {
    auto w = std::make_unique<Parameter>();
    auto b = std::make_unique<Parameter>();
    w->name = "twe.reduce" + std::to_string(i) + ".w";
    w->tensor = init::conv_weight(rng.fork(w->name), {channels, channels, 3, 3}, dt);
    b->name = "twe.reduce" + std::to_string(i) + ".b";
    b->tensor = init::zeros({channels}, dt);
    reg.add(w.get());
    reg.add(b.get());
    reduce_w_.push_back(std::move(w));
    reduce_b_.push_back(std::move(b));
  }
}

Tensor TweExtractor::downsample(const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != 3)
    fail("downsample: expected [B,3,H,W], got " + shape_str(image.shape()));
  if (image.dim(2) % 32 != 0 || image.dim(3) % 32 != 0)
    fail("downsample: H and W must be divisible by 32, got " + shape_str(image.shape()));
  Tensor f = op::conv2d(image, stem1_w_.tensor, stem1_b_.tensor, 2);
  f = op::gelu(f);
  return op::conv2d(f, stem2_w_.tensor, stem2_b_.tensor, 2);
}

TrainablePyramid TweExtractor::forward(const Tensor& image) const {
  TrainablePyramid pyr;
  Tensor f = downsample(image);
  for (size_t i = 0; i < 4; ++i) {
    if (i > 0)
      f = op::conv2d(f, reduce_w_[i - 1]->tensor, reduce_b_[i - 1]->tensor, 2);
    auto [dec, out] = stages_[i]->forward(f);
    pyr.levels.push_back(out);
    pyr.routing.push_back(std::move(dec));
    f = out;
  }
  return pyr;
}

}  // namespace weft
