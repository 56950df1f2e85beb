#include "weft/tape.hpp"

namespace weft {

namespace {
thread_local Tape* t_current = nullptr;
}

Tape* Tape::current() { return t_current; }

TapeScope::TapeScope(Tape& tape) : prev_(t_current) { t_current = &tape; }
TapeScope::~TapeScope() { t_current = prev_; }

NoGradScope::NoGradScope() : prev_(t_current) { t_current = nullptr; }
NoGradScope::~NoGradScope() { t_current = prev_; }

void Tape::accumulate(int node, const Tensor& g) {
  if (node < 0) return;
  if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
  Tensor& slot = grads_[static_cast<size_t>(node)];
  if (!slot.defined()) {
    slot = g.clone();
    return;
  }
  if (slot.shape() != g.shape())
    fail(std::string("gradient shape mismatch at node '") + nodes_[static_cast<size_t>(node)].op + "': " +
         shape_str(slot.shape()) + " vs " + shape_str(g.shape()));
  i64 n = slot.numel();
  if (slot.dtype() == DType::F32) {
    auto a = slot.data<float>();
    auto b = g.data<const float>();
    for (i64 i = 0; i < n; ++i) a[static_cast<size_t>(i)] += b[static_cast<size_t>(i)];
  } else {
    auto a = slot.data<double>();
    auto b = g.data<const double>();
    for (i64 i = 0; i < n; ++i) a[static_cast<size_t>(i)] += b[static_cast<size_t>(i)];
  }
}

void Tape::backward(const Tensor& loss) {
  if (!loss.is_scalar()) fail("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (loss.node < 0) fail("backward: loss is not on the tape");
  NoGradScope ng;  // backward fns may call ops; none of that is recorded
  grads_.assign(nodes_.size(), Tensor());
  accumulate(loss.node, Tensor::full(loss.shape(), 1.0, loss.dtype()));
  for (int i = loss.node; i >= 0; --i) {
    const Tensor& g = grads_[static_cast<size_t>(i)];
    if (!g.defined()) continue;
    if (nodes_[static_cast<size_t>(i)].backward) nodes_[static_cast<size_t>(i)].backward(*this, g);
  }
}

}  // namespace weft
