#pragma once

#include <map>

#include "weft/parameter.hpp"

namespace weft {

struct AdamWConfig {
  double lr = 5e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Decoupled weight decay Adam. State exists only for trainable parameters;
// a gradient on a frozen parameter is an invariant breach and throws.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  // Applies one update using Parameter::grad; parameters without a gradient
  // this step are left untouched. Clears the consumed gradients.
  void step(ParamRegistry& params);

  i64 step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Moments {
    Tensor m, v;
  };
  AdamWConfig cfg_;
  std::map<std::string, Moments> state_;
  i64 t_ = 0;
};

}  // namespace weft
