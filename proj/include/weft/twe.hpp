#pragma once

#include <memory>

#include "weft/wavelet.hpp"

namespace weft {

// Routing state for one forward pass: which experts each sample selected and
// the renormalized fusion coefficients.
struct RoutingDecision {
  std::vector<i64> selected;  // [B][k], expert indices 0..6 in descending-score order
  Tensor gate_probs;          // [B,7] softmax over all experts
  Tensor fused_weights;       // [B,k] softmax over the selected entries
  i64 k = 0;
};

// Top-k indices per row, ties broken by the lowest index. Returns [B][k]
// row-major, ordered by descending score.
std::vector<i64> topk_indices(const Tensor& scores, i64 k);

// One expert bank + router: seven wavelet experts with kernel sizes
// 2n-1 (n = 1..7), gated by a linear layer on globally pooled features.
class TweStage {
 public:
  static constexpr int kExperts = 7;
  static constexpr int kChain = 4;

  TweStage(const std::string& prefix, i64 channels, i64 k_select, Rng rng, DType dt, ParamRegistry& reg);
  TweStage(const TweStage&) = delete;

  // Seven expert maps, each shaped like f_m.
  std::vector<Tensor> build_experts(const Tensor& f_m) const;
  // Gating, hard top-k selection, renormalized fusion, 1x1 projection.
  std::pair<RoutingDecision, Tensor> route_topk(const Tensor& f_m, const std::vector<Tensor>& experts) const;
  // build_experts + route_topk.
  std::pair<RoutingDecision, Tensor> forward(const Tensor& f_m) const;

  i64 k_select() const { return k_; }

 private:
  struct Expert {
    std::vector<std::unique_ptr<WaveletConv>> chain;  // kChain convs, shared kernel size
    Parameter proj_w, proj_b;                         // 1x1 fuse across the four sub-features
  };
  std::vector<std::unique_ptr<Expert>> experts_;
  Parameter gate_w_;   // [7,C]
  Parameter gate_b_;   // [7]
  Parameter fuse_w_;   // 1x1 conv after expert mixing
  Parameter fuse_b_;
  i64 channels_;
  i64 k_;
};

struct TrainablePyramid {
  std::vector<Tensor> levels;  // F1..F4 at /4, /8, /16, /32
  std::vector<RoutingDecision> routing;
};

// Task-specific wavelet expert extractor: stride-4 stem, then four expert
// stages with stride-2 reducers between them.
class TweExtractor {
 public:
  TweExtractor(i64 channels, i64 k_select, Rng rng, DType dt, ParamRegistry& reg);
  TweExtractor(const TweExtractor&) = delete;

  // image: [B,3,H,W], H and W divisible by 32.
  Tensor downsample(const Tensor& image) const;
  TrainablePyramid forward(const Tensor& image) const;

  const TweStage& stage(int i) const { return *stages_[static_cast<size_t>(i)]; }

 private:
  Parameter stem1_w_, stem1_b_, stem2_w_, stem2_b_;
  std::vector<std::unique_ptr<TweStage>> stages_;    // 4
  std::vector<std::unique_ptr<Parameter>> reduce_w_; // stages 2..4
  std::vector<std::unique_ptr<Parameter>> reduce_b_;
  i64 channels_;
};

}  // namespace weft
