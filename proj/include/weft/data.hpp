#pragma once

#include "weft/rng.hpp"
#include "weft/tensor.hpp"

namespace weft {

struct Sample {
  Tensor image;  // [3,S,S] f32 in [0,1]
  Tensor mask;   // [1,S,S] f32 in {0,1}
};

struct SampleBatch {
  Tensor images;  // [B,3,S,S]
  Tensor masks;   // [B,1,S,S]
};

// Deterministic synthetic segmentation task: low-frequency textured
// backgrounds with 1..5 rotated shapes (rectangles, ellipses, thin bars)
// spanning two orders of magnitude in area. The mask is the shape union,
// rejected-and-resampled until it covers 1%..60% of the image.
Sample synth_sample(u64 seed, u64 index, i64 image_size);

class Dataset {
 public:
  static Dataset synthetic(u64 seed, i64 count, i64 image_size);
  static Dataset from_dir(const std::string& dir);
  void write_dir(const std::string& dir) const;

  i64 size() const { return static_cast<i64>(samples_.size()); }
  const Sample& at(i64 i) const { return samples_[static_cast<size_t>(i)]; }
  i64 image_size() const { return samples_.empty() ? 0 : samples_[0].image.dim(1); }

  SampleBatch batch(const std::vector<i64>& indices) const;

 private:
  std::vector<Sample> samples_;
};

}  // namespace weft
