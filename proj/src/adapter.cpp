#include "weft/adapter.hpp"

#include <cmath>

#include "weft/ops.hpp"

namespace weft {

namespace op = ops;

namespace {

Tensor map_to_tokens(const Tensor& map) {
  i64 B = map.dim(0), C = map.dim(1), h = map.dim(2), w = map.dim(3);
  return op::transpose(op::reshape(map, {B, C, h * w}), 1, 2);  // [B,hw,C]
}

Tensor tokens_to_map(const Tensor& tokens, i64 h, i64 w) {
  i64 B = tokens.dim(0), C = tokens.dim(2);
  return op::reshape(op::transpose(tokens, 1, 2), {B, C, h, w});
}

void init_linear(Parameter& w, Parameter& b, const std::string& prefix, i64 in, i64 out, Rng& rng,
                 DType dt, ParamRegistry& reg, bool zero_weight = false) {
  w.name = prefix + ".w";
  w.tensor = zero_weight ? init::zeros({in, out}, dt)
                         : init::truncated_normal(rng.fork(w.name), {in, out}, 0.02, dt);
  b.name = prefix + ".b";
  b.tensor = init::zeros({out}, dt);
  reg.add(&w);
  reg.add(&b);
}

void init_ln(Parameter& g, Parameter& b, const std::string& prefix, i64 dim, DType dt, ParamRegistry& reg) {
  g.name = prefix + ".g";
  g.tensor = Tensor::full({dim}, 1.0, dt);
  b.name = prefix + ".b";
  b.tensor = init::zeros({dim}, dt);
  reg.add(&g);
  reg.add(&b);
}

}  // namespace

std::array<Tensor, 3> TokenBundle::to_maps() const {
  std::array<Tensor, 3> maps;
  i64 off = 0;
  for (size_t s = 0; s < 3; ++s) {
    i64 n = hw[s][0] * hw[s][1];
    maps[s] = tokens_to_map(op::slice(tokens, 1, off, n), hw[s][0], hw[s][1]);
    off += n;
  }
  return maps;
}

TokenBundle assemble_tokens(const Tensor& f8, const Tensor& f16, const Tensor& f32,
                            const TokenBundle* previous) {
  if (f8.rank() != 4 || f16.rank() != 4 || f32.rank() != 4)
    fail("assemble_tokens: expected three [B,C,h,w] maps");
  if (f8.dim(2) != 2 * f16.dim(2) || f8.dim(3) != 2 * f16.dim(3) || f16.dim(2) != 2 * f32.dim(2) ||
      f16.dim(3) != 2 * f32.dim(3))
    fail("assemble_tokens: maps must sit at /8, /16, /32 of the input; got " + shape_str(f8.shape()) +
         ", " + shape_str(f16.shape()) + ", " + shape_str(f32.shape()));
  TokenBundle b;
  b.hw = {{{f8.dim(2), f8.dim(3)}, {f16.dim(2), f16.dim(3)}, {f32.dim(2), f32.dim(3)}}};
  b.tokens = op::concat({map_to_tokens(f8), map_to_tokens(f16), map_to_tokens(f32)}, 1);
  if (previous) {
    if (previous->tokens.shape() != b.tokens.shape())
      fail("assemble_tokens: previous bundle shape " + shape_str(previous->tokens.shape()) +
           " does not match " + shape_str(b.tokens.shape()));
    b.tokens = op::add(b.tokens, previous->tokens);
  }
  return b;
}

DeformInject::DeformInject(const std::string& prefix, i64 frozen_dim, i64 token_channels, i64 points,
                           Rng rng, DType dt, ParamRegistry& reg)
    : points_(points), dim_(frozen_dim) {
  init_ln(lnq_g_, lnq_b_, prefix + ".ln_q", frozen_dim, dt, reg);
  init_ln(lnv_g_, lnv_b_, prefix + ".ln_v", token_channels, dt, reg);
  // Offsets start at zero so the first samples sit exactly on the reference
  // points; the attention logits keep a live weight so the frozen queries
  // steer the injection from step one.
  init_linear(offset_w_, offset_b_, prefix + ".offset", frozen_dim, 3 * points * 2, rng, dt, reg,
              /*zero_weight=*/true);
  init_linear(attn_w_, attn_b_, prefix + ".attn", frozen_dim, 3 * points, rng, dt, reg);
  init_linear(value_w_, value_b_, prefix + ".value", token_channels, frozen_dim, rng, dt, reg);
  init_linear(out_w_, out_b_, prefix + ".out", frozen_dim, frozen_dim, rng, dt, reg);
}

Tensor DeformInject::forward(const Tensor& frozen, i64 hf, i64 wf, const TokenBundle& bundle) const {
  i64 B = frozen.dim(0), Nf = frozen.dim(1);
  if (Nf != hf * wf)
    fail("deform_inject: frozen tokens " + shape_str(frozen.shape()) + " do not fit a " +
         std::to_string(hf) + "x" + std::to_string(wf) + " grid");
  Tensor q = op::layer_norm(frozen, lnq_g_.tensor, lnq_b_.tensor);
  Tensor v = op::layer_norm(bundle.tokens, lnv_g_.tensor, lnv_b_.tensor);
  Tensor value = op::linear(v, value_w_.tensor, value_b_.tensor);  // [B,Ne,D]

  // Reference points: each query's normalized position on its grid.
  Tensor ref(Shape{1, Nf, 1, 2}, frozen.dtype());
  for (i64 i = 0; i < hf; ++i)
    for (i64 j = 0; j < wf; ++j) {
      ref.set((i * wf + j) * 2 + 0, (static_cast<double>(j) + 0.5) / static_cast<double>(wf));
      ref.set((i * wf + j) * 2 + 1, (static_cast<double>(i) + 0.5) / static_cast<double>(hf));
    }

  Tensor offsets = op::reshape(op::linear(q, offset_w_.tensor, offset_b_.tensor), {B, Nf, 3 * points_, 2});
  Tensor attn = op::softmax(op::linear(q, attn_w_.tensor, attn_b_.tensor), 2);  // [B,Nf,3P]

  // Split the projected tokens back into per-scale maps and sample P points
  // from each.
  std::vector<Tensor> sampled;
  i64 off = 0;
  for (size_t s = 0; s < 3; ++s) {
    i64 h = bundle.hw[s][0], w = bundle.hw[s][1];
    Tensor vmap = tokens_to_map(op::slice(value, 1, off, h * w), h, w);  // [B,D,h,w]
    off += h * w;
    Tensor o = op::slice(offsets, 2, static_cast<i64>(s) * points_, points_);  // [B,Nf,P,2]
    Tensor coords = op::add(o, ref);
    sampled.push_back(op::sample_bilinear(vmap, coords));  // [B,Nf,P,D]
  }
  Tensor samples = op::concat(sampled, 2);                             // [B,Nf,3P,D]
  Tensor weighted = op::mul(samples, op::reshape(attn, {B, Nf, 3 * points_, 1}));
  Tensor pooled = op::sum(weighted, 2);                                // [B,Nf,D]
  return op::linear(pooled, out_w_.tensor, out_b_.tensor);
}

Esto::Esto(const std::string& prefix, i64 dim, EstoParams params, Rng rng, DType dt, ParamRegistry& reg)
    : params_(params), dim_(dim) {
  if (params.subspaces < 1 || dim % params.subspaces != 0)
    fail("esto: dim " + std::to_string(dim) + " must be divisible by subspaces " +
         std::to_string(params.subspaces));
  if (params.rho <= 0) fail("esto: temperature must be positive");
  if (params.lambda < 0) fail("esto: lambda must be non-negative");
  init_linear(gate_w_, gate_b_, prefix + ".gate", dim, 1, rng, dt, reg);
}

Tensor Esto::edge_mask(const Tensor& tokens) const {
  Tensor v = op::var(tokens, 2);                       // [B,N] population variance over channels
  Tensor vmean = op::mean(v, 1, /*keepdim=*/true);     // [B,1]
  Tensor vstd = op::sqrt(op::var(v, 1, /*keepdim=*/true));
  return op::sigmoid(op::div(op::sub(v, vmean), op::add_scalar(vstd, params_.eps)));
}

Tensor Esto::forward(const Tensor& tokens) const {
  if (tokens.rank() != 3) fail("esto: expected [B,N,C], got " + shape_str(tokens.shape()));
  i64 B = tokens.dim(0), N = tokens.dim(1), C = tokens.dim(2);
  if (N < 1) fail("esto: empty token axis");
  if (C != dim_) fail("esto: channel dim " + std::to_string(C) + " != " + std::to_string(dim_));
  i64 H = params_.subspaces;
  i64 d = C / H;

  // Subspace attention from the normalized tokens, aggregated against the
  // unnormalized views.
  Tensor normed = op::l2_normalize(tokens);
  Tensor fh = op::transpose(op::reshape(normed, {B, N, H, d}), 1, 2);    // [B,H,N,d]
  Tensor xh = op::transpose(op::reshape(tokens, {B, N, H, d}), 1, 2);
  Tensor scores = op::mul_scalar(op::matmul(fh, op::transpose(fh, 2, 3)),
                                 1.0 / (std::sqrt(static_cast<double>(d)) * params_.rho));
  Tensor attn = op::softmax(scores, 3);
  Tensor tstar = op::reshape(op::transpose(op::matmul(attn, xh), 1, 2), {B, N, C});

  Tensor mask = edge_mask(tokens);  // [B,N]
  Tensor modulated = op::mul(tstar, op::reshape(op::add_scalar(op::mul_scalar(mask, params_.lambda), 1.0),
                                                {B, N, 1}));

  Tensor gmean = op::mean(tokens, 1);  // [B,C]
  Tensor delta = op::sigmoid(op::linear(gmean, gate_w_.tensor, gate_b_.tensor));  // [B,1]
  return op::add(op::mul(modulated, op::reshape(delta, {B, 1, 1})), tokens);
}

See::See(const std::string& prefix, i64 channels, Rng rng, DType dt, ParamRegistry& reg)
    : channels_(channels) {
  // 4-neighbor Laplacian stencil, one copy per channel.
  laplacian_ = Tensor(Shape{channels, 1, 3, 3}, dt);
  const double k[9] = {0, 1, 0, 1, -4, 1, 0, 1, 0};
  for (i64 c = 0; c < channels; ++c)
    for (i64 i = 0; i < 9; ++i) laplacian_.set(c * 9 + i, k[i]);

  for (int n = 0; n < 3; ++n) {
    i64 ksize = 2 * (n + 1) + 1;
    Parameter& dw = mso_dw_[static_cast<size_t>(n)];
    dw.name = prefix + ".mso" + std::to_string(ksize) + ".dw";
    dw.tensor = init::conv_weight(rng.fork(dw.name), {channels, 1, ksize, ksize}, dt);
    reg.add(&dw);
    Parameter& pw = mso_pw_w_[static_cast<size_t>(n)];
    Parameter& pb = mso_pw_b_[static_cast<size_t>(n)];
    pw.name = prefix + ".mso" + std::to_string(ksize) + ".pw.w";
    pw.tensor = init::conv_weight(rng.fork(pw.name), {channels, channels, 1, 1}, dt);
    pb.name = prefix + ".mso" + std::to_string(ksize) + ".pw.b";
    pb.tensor = init::zeros({channels}, dt);
    reg.add(&pw);
    reg.add(&pb);
  }
  merge_logits_.name = prefix + ".merge";
  merge_logits_.tensor = init::zeros({3}, dt);
  reg.add(&merge_logits_);
}

Tensor See::merge_weights() const { return op::softmax(merge_logits_.tensor, 0); }

TokenBundle See::forward(const TokenBundle& bundle) const {
  auto maps = bundle.to_maps();
  Tensor w = merge_weights();  // [3] -> w_d, w_a, w_m
  Tensor wd = op::reshape(op::slice(w, 0, 0, 1), {1, 1, 1, 1});
  Tensor wa = op::reshape(op::slice(w, 0, 1, 1), {1, 1, 1, 1});
  Tensor wm = op::reshape(op::slice(w, 0, 2, 1), {1, 1, 1, 1});

  std::array<Tensor, 3> merged;
  int groups = static_cast<int>(channels_);
  for (size_t s = 0; s < 3; ++s) {
    const Tensor& m = maps[s];
    Tensor lap = op::conv2d(m, laplacian_, Tensor(), 1, 1, op::PadMode::Reflect, groups);
    Tensor gmax = op::max(op::max(m, 3, true), 2, true);  // [B,C,1,1], broadcasts back
    Tensor mso;
    for (int n = 0; n < 3; ++n) {
      Tensor dwc = op::conv2d(m, mso_dw_[static_cast<size_t>(n)].tensor, Tensor(), 1, -1,
                              op::PadMode::Zero, groups);
      Tensor mixed = op::conv2d(dwc, mso_pw_w_[static_cast<size_t>(n)].tensor,
                                mso_pw_b_[static_cast<size_t>(n)].tensor);
      mso = mso.defined() ? op::add(mso, mixed) : mixed;
    }
    Tensor enhanced = op::add(op::add(op::mul(lap, wd), op::mul(gmax, wa)), op::mul(mso, wm));
    merged[s] = op::add(m, enhanced);
  }
  TokenBundle out = assemble_tokens(merged[0], merged[1], merged[2]);
  out.tokens = op::add(out.tokens, bundle.tokens);
  return out;
}

EcAdapterStage::EcAdapterStage(const std::string& prefix, i64 frozen_dim, i64 token_channels, i64 points,
                               EstoParams esto_params, Rng rng, DType dt, ParamRegistry& reg)
    : deform_(prefix + ".deform", frozen_dim, token_channels, points, rng.fork(prefix + ".deform"), dt, reg),
      esto_(prefix + ".esto", frozen_dim, esto_params, rng.fork(prefix + ".esto"), dt, reg),
      see_(prefix + ".see", token_channels, rng.fork(prefix + ".see"), dt, reg) {}

EcAdapterStage::Out EcAdapterStage::forward(const Tensor& frozen, i64 hf, i64 wf,
                                            const TokenBundle& bundle) const {
  Tensor injected = deform_.forward(frozen, hf, wf, bundle);
  // ESTO's residual tail consumes the injected feature; its output replaces
  // the frozen tokens for the next frozen block.
  Tensor refined = esto_.forward(injected);
  return {refined, see_.forward(bundle)};
}

}  // namespace weft
