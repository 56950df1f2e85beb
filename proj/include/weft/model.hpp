#pragma once

#include "weft/adapter.hpp"
#include "weft/backbone.hpp"
#include "weft/twe.hpp"

namespace weft {

struct ModelConfig {
  i64 image_size = 128;   // divisible by 32
  i64 channels = 32;      // trainable branch width, divisible by 4
  i64 frozen_dim = 64;    // divisible by subspaces
  i64 k_experts = 4;      // 1..7
  i64 subspaces = 4;      // ESTO H
  double rho = 1.0;       // ESTO temperature
  double lambda = 1.0;    // ESTO edge-mask intensity
  i64 points = 4;         // deformable samples per scale
  i64 decoder_width = 32;
  i64 frozen_mlp_hidden = 5120;
  int frozen_blocks = 4;
  int frozen_heads = 4;

  void validate() const;
};

enum class Regime { FrozenOnly, Weft, FullFt };

const char* regime_name(Regime r);
Regime parse_regime(const std::string& s);

struct ParamCounts {
  u64 frozen = 0;
  u64 trainable = 0;
  double fraction = 0.0;  // trainable / total
};

// Multi-scale convolutional mask decoder over the frozen /16 map and the
// trainable /8-/16-/32 maps.
class Decoder {
 public:
  Decoder(const std::string& prefix, i64 frozen_dim, i64 channels, i64 width, Rng rng, DType dt,
          ParamRegistry& reg);
  Decoder(const Decoder&) = delete;

  Tensor forward(const Tensor& frozen_map, const std::array<Tensor, 3>& maps, i64 out_h, i64 out_w) const;

 private:
  Parameter p8_w_, p8_b_, p16_w_, p16_b_, p32_w_, p32_b_, pf_w_, pf_b_;
  Parameter refine1_w_, refine1_b_, refine2_w_, refine2_b_;
  Parameter head_w_, head_b_;
};

// The full segmenter: frozen backbone + trainable wavelet-expert branch +
// four EC adapter stages + decoder. The regime controls which components
// exist and which parameters train.
class WeftModel {
 public:
  WeftModel(const ModelConfig& cfg, u64 seed, Regime regime = Regime::Weft, DType dt = DType::F32);
  WeftModel(const WeftModel&) = delete;

  // image [B,3,S,S] -> logits [B,1,S,S]
  Tensor forward(const Tensor& image) const;

  ParamCounts count_params() const;
  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }
  const ModelConfig& config() const { return cfg_; }
  Regime regime() const { return regime_; }
  u64 seed() const { return seed_; }
  DType dtype() const { return dtype_; }

  const TweExtractor* twe() const { return twe_.get(); }
  const EcAdapterStage& adapter(int i) const { return *adapters_[static_cast<size_t>(i)]; }
  const FrozenBackbone& backbone() const { return *backbone_; }

  // Checkpoint: WTEN with every parameter plus a JSON sidecar carrying the
  // config, the regime, and each name's frozen flag.
  void save_checkpoint(const std::string& wten_path, const std::string& sidecar_path) const;
  void load_checkpoint(const std::string& wten_path);

 private:
  ModelConfig cfg_;
  Regime regime_;
  DType dtype_;
  u64 seed_;
  ParamRegistry reg_;
  std::unique_ptr<FrozenBackbone> backbone_;
  std::unique_ptr<TweExtractor> twe_;
  std::vector<std::unique_ptr<EcAdapterStage>> adapters_;
  std::unique_ptr<Decoder> decoder_;
};

// Loads the sidecar written by save_checkpoint.
struct CheckpointMeta {
  ModelConfig config;
  Regime regime = Regime::Weft;
  u64 seed = 0;
};
CheckpointMeta read_checkpoint_meta(const std::string& sidecar_path);

}  // namespace weft
