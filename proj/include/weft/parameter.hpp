#pragma once

#include <cmath>
#include <map>

#include "weft/rng.hpp"
#include "weft/tape.hpp"
#include "weft/tensor.hpp"

namespace weft {

// Named model weight. Frozen parameters never get tape nodes, never receive
// gradients, and are never touched by the optimizer. Non-movable: the
// registry keeps raw pointers, so modules holding Parameters live behind
// stable addresses (unique_ptr for module containers).
struct Parameter {
  Parameter() = default;
  Parameter(const Parameter&) = delete;
  Parameter& operator=(const Parameter&) = delete;

  std::string name;
  Tensor tensor;
  bool frozen = false;
  Tensor grad;  // populated by ParamRegistry::collect_grads
};

// Flat ordered view over every parameter of a model. Modules own their
// Parameters; the registry stores pointers in registration order.
class ParamRegistry {
 public:
  void add(Parameter* p) {
    if (by_name_.count(p->name)) fail("duplicate parameter name: " + p->name);
    by_name_[p->name] = p;
    order_.push_back(p);
  }

  // Registers every trainable parameter as a tape leaf for this step.
  void bind(Tape& tape) {
    for (Parameter* p : order_) {
      if (p->frozen) {
        p->tensor.node = -1;
        p->tensor.requires_grad = false;
      } else {
        tape.watch(p->tensor);
      }
      p->grad = Tensor();
    }
  }

  // Pulls gradients off the tape into Parameter::grad. Throws if a frozen
  // parameter somehow received one.
  void collect_grads(const Tape& tape) {
    for (Parameter* p : order_) {
      if (p->frozen) continue;
      const Tensor* g = tape.grad(p->tensor.node);
      if (g) p->grad = g->clone();
    }
  }

  Parameter* find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  const std::vector<Parameter*>& all() const { return order_; }

  u64 count(bool frozen) const {
    u64 n = 0;
    for (const Parameter* p : order_)
      if (p->frozen == frozen) n += static_cast<u64>(p->tensor.numel());
    return n;
  }

  void set_all_frozen(bool frozen) {
    for (Parameter* p : order_) p->frozen = frozen;
  }

 private:
  std::map<std::string, Parameter*> by_name_;
  std::vector<Parameter*> order_;
};

// Weight init: truncated normal, zeros for biases. Token-space linear layers
// use a flat std of 0.02 (they sit behind layer norms); convolution kernels
// scale the std by fan-in so activations keep their magnitude through the
// conv stack.
namespace init {

inline Tensor truncated_normal(Rng rng, Shape shape, double stddev, DType dt) {
  Tensor t(std::move(shape), dt);
  for (i64 i = 0; i < t.numel(); ++i) t.set(i, rng.truncated_normal(stddev));
  return t;
}

// shape [Cout, Cin/g, kh, kw]; std = 1/sqrt(Cin/g * kh * kw)
inline Tensor conv_weight(Rng rng, Shape shape, DType dt) {
  double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
  return truncated_normal(std::move(rng), std::move(shape), 1.0 / std::sqrt(fan_in), dt);
}

inline Tensor zeros(Shape shape, DType dt) { return Tensor(std::move(shape), dt); }

}  // namespace init

}  // namespace weft
