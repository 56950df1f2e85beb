#pragma once

#include <cstring>
#include <memory>

#include "weft/common.hpp"

namespace weft {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

inline const char* dtype_name(DType d) { return d == DType::F32 ? "f32" : "f64"; }
inline size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 8; }

namespace detail {
void storage_track_alloc(u64 bytes);
void storage_track_free(u64 bytes);
}  // namespace detail

struct Storage {
  DType dtype;
  i64 numel;
  std::unique_ptr<std::byte[]> bytes;

  Storage(DType dt, i64 n) : dtype(dt), numel(n), bytes(new std::byte[n * dtype_size(dt)]()) {
    detail::storage_track_alloc(static_cast<u64>(n) * dtype_size(dt));
  }
  ~Storage() { detail::storage_track_free(static_cast<u64>(numel) * dtype_size(dtype)); }
  Storage(const Storage&) = delete;
  Storage& operator=(const Storage&) = delete;
};

// Dense row-major N-d array. Copies share storage; ops never mutate their
// inputs, so sharing is safe. `node` ties a value to the active tape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dt = DType::F32)
      : shape_(std::move(shape)), storage_(std::make_shared<Storage>(dt, shape_numel(shape_))) {}

  static Tensor scalar(double v, DType dt = DType::F32) {
    Tensor t(Shape{1}, dt);
    t.set(0, v);
    return t;
  }
  static Tensor full(Shape shape, double v, DType dt = DType::F32);
  static Tensor from(Shape shape, const std::vector<double>& values, DType dt = DType::F32);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  i64 dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  i64 numel() const { return storage_ ? storage_->numel : 0; }
  DType dtype() const { return storage_->dtype; }
  bool is_scalar() const { return numel() == 1; }

  template <class T>
  std::span<T> data() {
    return {reinterpret_cast<T*>(storage_->bytes.get()), static_cast<size_t>(numel())};
  }
  template <class T>
  std::span<const T> data() const {
    return {reinterpret_cast<const T*>(storage_->bytes.get()), static_cast<size_t>(numel())};
  }
  const std::byte* raw() const { return storage_->bytes.get(); }
  size_t raw_size() const { return static_cast<size_t>(numel()) * dtype_size(dtype()); }

  // dtype-agnostic element access; convenient in tests and glue code.
  double at(i64 i) const {
    return dtype() == DType::F32 ? static_cast<double>(data<float>()[static_cast<size_t>(i)])
                                 : data<double>()[static_cast<size_t>(i)];
  }
  void set(i64 i, double v) {
    if (dtype() == DType::F32)
      data<float>()[static_cast<size_t>(i)] = static_cast<float>(v);
    else
      data<double>()[static_cast<size_t>(i)] = v;
  }
  double item() const {
    if (!is_scalar()) fail("item() on non-scalar tensor " + shape_str(shape_));
    return at(0);
  }

  Tensor clone() const;
  Tensor astype(DType dt) const;
  // Same storage, new shape (no tape node; ops::reshape records one).
  Tensor view_as(Shape shape) const {
    if (shape_numel(shape) != numel())
      fail("view_as: numel mismatch " + shape_str(shape_) + " -> " + shape_str(shape));
    Tensor t = *this;
    t.shape_ = std::move(shape);
    t.node = -1;
    return t;
  }

  bool shares_storage(const Tensor& o) const { return storage_ == o.storage_; }

  int node = -1;              // tape node id, -1 = constant / off-tape
  bool requires_grad = false; // leaf flag; tape.watch() honors it

 private:
  Shape shape_;
  std::shared_ptr<Storage> storage_;
};

// Throws NumericError if t contains NaN/Inf.
void check_finite(const Tensor& t, const char* op_name);

}  // namespace weft
