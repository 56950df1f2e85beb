#include "weft/backbone.hpp"

#include <cmath>

#include "weft/ops.hpp"

namespace weft {

namespace op = ops;

FrozenBackbone::FrozenBackbone(const BackboneConfig& cfg, DType dt, ParamRegistry& reg) : cfg_(cfg) {
  if (cfg.dim % cfg.heads != 0) fail("backbone: dim must be divisible by heads");
  Rng rng = Rng(cfg.seed).fork("backbone");
  auto frozen_param = [&](Parameter& p, const std::string& name, Tensor t) {
    p.name = name;
    p.tensor = std::move(t);
    p.frozen = true;
    reg.add(&p);
  };
  frozen_param(embed_w_, "backbone.embed.w",
               init::conv_weight(rng.fork("embed"), {cfg.dim, 3, cfg.patch, cfg.patch}, dt));
  frozen_param(embed_b_, "backbone.embed.b", init::zeros({cfg.dim}, dt));

  blocks_.reserve(static_cast<size_t>(cfg.blocks));
  for (int i = 0; i < cfg.blocks; ++i) {
    auto b = std::make_unique<Block>();
    std::string p = "backbone.block" + std::to_string(i + 1);
    Rng br = rng.fork(p);
    frozen_param(b->ln1_g, p + ".ln1.g", Tensor::full({cfg.dim}, 1.0, dt));
    frozen_param(b->ln1_b, p + ".ln1.b", init::zeros({cfg.dim}, dt));
    frozen_param(b->qkv_w, p + ".attn.qkv.w",
                 init::truncated_normal(br.fork("qkv"), {cfg.dim, 3 * cfg.dim}, 0.02, dt));
    frozen_param(b->qkv_b, p + ".attn.qkv.b", init::zeros({3 * cfg.dim}, dt));
    frozen_param(b->proj_w, p + ".attn.proj.w",
                 init::truncated_normal(br.fork("proj"), {cfg.dim, cfg.dim}, 0.02, dt));
    frozen_param(b->proj_b, p + ".attn.proj.b", init::zeros({cfg.dim}, dt));
    frozen_param(b->ln2_g, p + ".ln2.g", Tensor::full({cfg.dim}, 1.0, dt));
    frozen_param(b->ln2_b, p + ".ln2.b", init::zeros({cfg.dim}, dt));
    frozen_param(b->mlp1_w, p + ".mlp.fc1.w",
                 init::truncated_normal(br.fork("fc1"), {cfg.dim, cfg.mlp_hidden}, 0.02, dt));
    frozen_param(b->mlp1_b, p + ".mlp.fc1.b", init::zeros({cfg.mlp_hidden}, dt));
    frozen_param(b->mlp2_w, p + ".mlp.fc2.w",
                 init::truncated_normal(br.fork("fc2"), {cfg.mlp_hidden, cfg.dim}, 0.02, dt));
    frozen_param(b->mlp2_b, p + ".mlp.fc2.b", init::zeros({cfg.dim}, dt));
    blocks_.push_back(std::move(b));
  }
}

Tensor FrozenBackbone::patch_embed(const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != 3)
    fail("patch_embed: expected [B,3,H,W], got " + shape_str(image.shape()));
  if (image.dim(2) % cfg_.patch != 0 || image.dim(3) % cfg_.patch != 0)
    fail("patch_embed: spatial dims must be divisible by " + std::to_string(cfg_.patch));
  Tensor grid = op::conv2d(image, embed_w_.tensor, embed_b_.tensor, static_cast<int>(cfg_.patch), 0);
  i64 B = grid.dim(0), D = grid.dim(1), h = grid.dim(2), w = grid.dim(3);
  return op::transpose(op::reshape(grid, {B, D, h * w}), 1, 2);
}

Tensor FrozenBackbone::block(int i, const Tensor& tokens) const {
  const Block& b = *blocks_[static_cast<size_t>(i)];
  i64 B = tokens.dim(0), N = tokens.dim(1), D = tokens.dim(2);
  i64 H = cfg_.heads, dh = D / H;

  Tensor x = op::layer_norm(tokens, b.ln1_g.tensor, b.ln1_b.tensor);
  Tensor qkv = op::linear(x, b.qkv_w.tensor, b.qkv_b.tensor);  // [B,N,3D]
  auto parts = op::split(qkv, 2, 3);
  auto heads = [&](const Tensor& t) {
    return op::transpose(op::reshape(t, {B, N, H, dh}), 1, 2);  // [B,H,N,dh]
  };
  Tensor q = heads(parts[0]), k = heads(parts[1]), v = heads(parts[2]);
  Tensor scores = op::mul_scalar(op::matmul(q, op::transpose(k, 2, 3)), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor attn = op::softmax(scores, 3);
  Tensor ctx = op::reshape(op::transpose(op::matmul(attn, v), 1, 2), {B, N, D});
  Tensor attended = op::add(tokens, op::linear(ctx, b.proj_w.tensor, b.proj_b.tensor));

  Tensor y = op::layer_norm(attended, b.ln2_g.tensor, b.ln2_b.tensor);
  Tensor h1 = op::gelu(op::linear(y, b.mlp1_w.tensor, b.mlp1_b.tensor));
  return op::add(attended, op::linear(h1, b.mlp2_w.tensor, b.mlp2_b.tensor));
}

}  // namespace weft
