#pragma once

#include <functional>

#include "weft/tensor.hpp"

namespace weft {

// Reverse-mode tape. Ops append nodes in execution order, so node order is a
// topological order; backward walks it once in reverse. One tape per training
// step, discarded afterwards. Not shared across threads.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  // Register a leaf (trainable parameter or checked input). Returns node id.
  int watch(Tensor& t) {
    t.requires_grad = true;
    t.node = add_node("leaf", nullptr);
    return t.node;
  }

  int add_node(const char* op, BackwardFn fn) {
    nodes_.push_back(Node{op, std::move(fn)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Accumulate a gradient contribution for `node`. No-op for constants.
  void accumulate(int node, const Tensor& g);

  // Populates gradients for every node reachable from `loss` (which must be
  // scalar and on this tape). Each node's backward runs at most once.
  void backward(const Tensor& loss);

  const Tensor* grad(int node) const {
    if (node < 0 || node >= static_cast<int>(grads_.size()) || !grads_[static_cast<size_t>(node)].defined())
      return nullptr;
    return &grads_[static_cast<size_t>(node)];
  }

  void reset() {
    nodes_.clear();
    grads_.clear();
  }

  size_t size() const { return nodes_.size(); }
  const char* op_name(int node) const { return nodes_[static_cast<size_t>(node)].op; }

  // Active tape for the current thread (nullptr = recording off).
  static Tape* current();

 private:
  struct Node {
    const char* op;
    BackwardFn backward;  // nullptr for leaves
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;

  friend class TapeScope;
};

// RAII binding of a tape to the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Suspends recording (forward-only evaluation) while alive.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;

 private:
  Tape* prev_;
};

}  // namespace weft
