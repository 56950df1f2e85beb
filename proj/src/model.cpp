#include "weft/model.hpp"

#include <fstream>

#include "json.hpp"
#include "weft/ops.hpp"
#include "weft/wten.hpp"

namespace weft {

namespace op = ops;
using nlohmann::json;

void ModelConfig::validate() const {
  if (image_size < 32 || image_size % 32 != 0)
    fail("config: image_size must be a positive multiple of 32, got " + std::to_string(image_size));
  if (channels < 4 || channels % 4 != 0)
    fail("config: channels must be a positive multiple of 4, got " + std::to_string(channels));
  if (k_experts < 1 || k_experts > 7)
    fail("config: k_experts must be in 1..7, got " + std::to_string(k_experts));
  if (subspaces < 1 || frozen_dim % subspaces != 0)
    fail("config: frozen_dim " + std::to_string(frozen_dim) + " must be divisible by subspaces " +
         std::to_string(subspaces));
  if (rho <= 0) fail("config: rho must be positive");
  if (lambda < 0) fail("config: lambda must be non-negative");
  if (points < 1) fail("config: points must be >= 1");
  if (decoder_width < 1) fail("config: decoder_width must be >= 1");
}

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::FrozenOnly: return "frozen";
    case Regime::Weft: return "weft";
    case Regime::FullFt: return "full";
  }
  return "?";
}

Regime parse_regime(const std::string& s) {
  if (s == "frozen") return Regime::FrozenOnly;
  if (s == "weft") return Regime::Weft;
  if (s == "full") return Regime::FullFt;
  fail("unknown regime '" + s + "' (expected frozen|weft|full)");
}

Decoder::Decoder(const std::string& prefix, i64 frozen_dim, i64 channels, i64 width, Rng rng, DType dt,
                 ParamRegistry& reg) {
  auto conv_param = [&](Parameter& w, Parameter& b, const std::string& name, i64 cout, i64 cin, i64 k) {
    w.name = prefix + "." + name + ".w";
    w.tensor = init::conv_weight(rng.fork(w.name), {cout, cin, k, k}, dt);
    b.name = prefix + "." + name + ".b";
    b.tensor = init::zeros({cout}, dt);
    reg.add(&w);
    reg.add(&b);
  };
  conv_param(p8_w_, p8_b_, "proj8", width, channels, 1);
  conv_param(p16_w_, p16_b_, "proj16", width, channels, 1);
  conv_param(p32_w_, p32_b_, "proj32", width, channels, 1);
  conv_param(pf_w_, pf_b_, "proj_frozen", width, frozen_dim, 1);
  conv_param(refine1_w_, refine1_b_, "refine1", width, width, 3);
  conv_param(refine2_w_, refine2_b_, "refine2", width, width, 3);
  conv_param(head_w_, head_b_, "head", 1, width, 1);
}

Tensor Decoder::forward(const Tensor& frozen_map, const std::array<Tensor, 3>& maps, i64 out_h,
                        i64 out_w) const {
  Tensor x32 = op::conv2d(maps[2], p32_w_.tensor, p32_b_.tensor);
  Tensor x16 = op::add(op::conv2d(maps[1], p16_w_.tensor, p16_b_.tensor),
                       op::conv2d(frozen_map, pf_w_.tensor, pf_b_.tensor));
  x16 = op::add(x16, op::resize_bilinear(x32, x16.dim(2), x16.dim(3)));
  Tensor x8 = op::add(op::conv2d(maps[0], p8_w_.tensor, p8_b_.tensor),
                      op::resize_bilinear(x16, maps[0].dim(2), maps[0].dim(3)));
  x8 = op::gelu(op::conv2d(x8, refine1_w_.tensor, refine1_b_.tensor));
  x8 = op::gelu(op::conv2d(x8, refine2_w_.tensor, refine2_b_.tensor));
  Tensor logits = op::conv2d(x8, head_w_.tensor, head_b_.tensor);
  return op::resize_bilinear(logits, out_h, out_w);
}

WeftModel::WeftModel(const ModelConfig& cfg, u64 seed, Regime regime, DType dt)
    : cfg_(cfg), regime_(regime), dtype_(dt), seed_(seed) {
  cfg_.validate();
  BackboneConfig bc;
  bc.dim = cfg.frozen_dim;
  bc.blocks = cfg.frozen_blocks;
  bc.heads = cfg.frozen_heads;
  bc.mlp_hidden = cfg.frozen_mlp_hidden;
  bc.seed = seed;
  backbone_ = std::make_unique<FrozenBackbone>(bc, dt, reg_);

  Rng rng = Rng(seed).fork("trainable");
  if (regime != Regime::FrozenOnly) {
    twe_ = std::make_unique<TweExtractor>(cfg.channels, cfg.k_experts, rng.fork("twe"), dt, reg_);
    EstoParams ep;
    ep.subspaces = cfg.subspaces;
    ep.rho = cfg.rho;
    ep.lambda = cfg.lambda;
    for (int i = 1; i <= 4; ++i)
      adapters_.push_back(std::make_unique<EcAdapterStage>("ec.stage" + std::to_string(i), cfg.frozen_dim,
                                                           cfg.channels, cfg.points, ep,
                                                           rng.fork("ec.stage" + std::to_string(i)), dt,
                                                           reg_));
  }
  decoder_ = std::make_unique<Decoder>("decoder", cfg.frozen_dim, cfg.channels, cfg.decoder_width,
                                       rng.fork("decoder"), dt, reg_);
  if (regime == Regime::FullFt) reg_.set_all_frozen(false);
}

Tensor WeftModel::forward(const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != 3 || image.dim(2) != cfg_.image_size ||
      image.dim(3) != cfg_.image_size)
    fail("model: expected image [B,3," + std::to_string(cfg_.image_size) + "," +
         std::to_string(cfg_.image_size) + "], got " + shape_str(image.shape()));
  i64 B = image.dim(0);
  i64 hf = cfg_.image_size / 16, wf = cfg_.image_size / 16;

  Tensor frozen = backbone_->patch_embed(image);  // F1*

  if (regime_ == Regime::FrozenOnly) {
    for (int i = 0; i < cfg_.frozen_blocks; ++i) frozen = backbone_->block(i, frozen);
    Tensor fmap = op::reshape(op::transpose(frozen, 1, 2), {B, cfg_.frozen_dim, hf, wf});
    std::array<Tensor, 3> zeros{
        Tensor(Shape{B, cfg_.channels, cfg_.image_size / 8, cfg_.image_size / 8}, dtype_),
        Tensor(Shape{B, cfg_.channels, hf, wf}, dtype_),
        Tensor(Shape{B, cfg_.channels, cfg_.image_size / 32, cfg_.image_size / 32}, dtype_)};
    return decoder_->forward(fmap, zeros, cfg_.image_size, cfg_.image_size);
  }

  TrainablePyramid pyr = twe_->forward(image);
  TokenBundle bundle = assemble_tokens(pyr.levels[1], pyr.levels[2], pyr.levels[3]);

  Tensor refined;
  for (int i = 0; i < 4; ++i) {
    auto out = adapters_[static_cast<size_t>(i)]->forward(frozen, hf, wf, bundle);
    refined = out.refined_frozen;
    bundle = std::move(out.next_bundle);
    // The decoder consumes the stage-4 adapted tokens, so the fourth frozen
    // block has no consumer and is skipped here (its weights still exist
    // and count as frozen parameters).
    if (i < 3) frozen = backbone_->block(i, refined);
  }

  Tensor fmap = op::reshape(op::transpose(refined, 1, 2), {B, cfg_.frozen_dim, hf, wf});
  return decoder_->forward(fmap, bundle.to_maps(), cfg_.image_size, cfg_.image_size);
}

ParamCounts WeftModel::count_params() const {
  ParamCounts c;
  c.frozen = reg_.count(true);
  c.trainable = reg_.count(false);
  c.fraction = static_cast<double>(c.trainable) / static_cast<double>(c.frozen + c.trainable);
  return c;
}

void WeftModel::save_checkpoint(const std::string& wten_path, const std::string& sidecar_path) const {
  std::vector<wten::NamedTensor> tensors;
  json frozen_flags = json::object();
  for (const Parameter* p : reg_.all()) {
    tensors.emplace_back(p->name, p->tensor);
    frozen_flags[p->name] = p->frozen;
  }
  wten::write(wten_path, tensors);

  json j;
  j["format"] = "weft-checkpoint-v1";
  j["regime"] = regime_name(regime_);
  j["seed"] = seed_;
  j["config"] = {{"image_size", cfg_.image_size},
                 {"channels", cfg_.channels},
                 {"frozen_dim", cfg_.frozen_dim},
                 {"k_experts", cfg_.k_experts},
                 {"subspaces", cfg_.subspaces},
                 {"rho", cfg_.rho},
                 {"lambda", cfg_.lambda},
                 {"points", cfg_.points},
                 {"decoder_width", cfg_.decoder_width},
                 {"frozen_mlp_hidden", cfg_.frozen_mlp_hidden},
                 {"frozen_blocks", cfg_.frozen_blocks},
                 {"frozen_heads", cfg_.frozen_heads}};
  j["frozen"] = frozen_flags;
  std::ofstream f(sidecar_path, std::ios::trunc);
  if (!f) fail("cannot write checkpoint sidecar: " + sidecar_path);
  f << j.dump(2) << "\n";
}

void WeftModel::load_checkpoint(const std::string& wten_path) {
  auto tensors = wten::read(wten_path);
  if (tensors.size() != reg_.all().size())
    fail("checkpoint " + wten_path + " holds " + std::to_string(tensors.size()) + " tensors, model has " +
         std::to_string(reg_.all().size()));
  for (auto& [name, t] : tensors) {
    Parameter* p = reg_.find(name);
    if (!p) fail("checkpoint tensor '" + name + "' has no matching parameter");
    if (t.shape() != p->tensor.shape())
      fail("checkpoint tensor '" + name + "' shape " + shape_str(t.shape()) + " != model " +
           shape_str(p->tensor.shape()));
    p->tensor = dtype_ == DType::F32 ? std::move(t) : t.astype(dtype_);
  }
}

CheckpointMeta read_checkpoint_meta(const std::string& sidecar_path) {
  std::ifstream f(sidecar_path);
  if (!f) fail("cannot read checkpoint sidecar: " + sidecar_path);
  json j = json::parse(f, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) fail("checkpoint sidecar is not valid JSON: " + sidecar_path);
  CheckpointMeta m;
  const json& c = j.at("config");
  m.config.image_size = c.at("image_size").get<i64>();
  m.config.channels = c.at("channels").get<i64>();
  m.config.frozen_dim = c.at("frozen_dim").get<i64>();
  m.config.k_experts = c.at("k_experts").get<i64>();
  m.config.subspaces = c.at("subspaces").get<i64>();
  m.config.rho = c.at("rho").get<double>();
  m.config.lambda = c.at("lambda").get<double>();
  m.config.points = c.at("points").get<i64>();
  m.config.decoder_width = c.at("decoder_width").get<i64>();
  m.config.frozen_mlp_hidden = c.at("frozen_mlp_hidden").get<i64>();
  m.config.frozen_blocks = c.at("frozen_blocks").get<int>();
  m.config.frozen_heads = c.at("frozen_heads").get<int>();
  m.regime = parse_regime(j.at("regime").get<std::string>());
  m.seed = j.at("seed").get<u64>();
  return m;
}

}  // namespace weft
