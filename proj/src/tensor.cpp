#include "weft/tensor.hpp"

#include <cmath>

namespace weft {

Tensor Tensor::full(Shape shape, double v, DType dt) {
  Tensor t(std::move(shape), dt);
  i64 n = t.numel();
  if (dt == DType::F32) {
    auto d = t.data<float>();
    float f = static_cast<float>(v);
    for (i64 i = 0; i < n; ++i) d[static_cast<size_t>(i)] = f;
  } else {
    auto d = t.data<double>();
    for (i64 i = 0; i < n; ++i) d[static_cast<size_t>(i)] = v;
  }
  return t;
}

Tensor Tensor::from(Shape shape, const std::vector<double>& values, DType dt) {
  Tensor t(std::move(shape), dt);
  if (static_cast<i64>(values.size()) != t.numel())
    fail("Tensor::from: " + std::to_string(values.size()) + " values for shape " + shape_str(t.shape()));
  for (i64 i = 0; i < t.numel(); ++i) t.set(i, values[static_cast<size_t>(i)]);
  return t;
}

Tensor Tensor::clone() const {
  Tensor t(shape_, dtype());
  std::memcpy(t.data<float>().data(), storage_->bytes.get(), raw_size());
  return t;
}

Tensor Tensor::astype(DType dt) const {
  if (dt == dtype()) return clone();
  Tensor t(shape_, dt);
  for (i64 i = 0; i < numel(); ++i) t.set(i, at(i));
  return t;
}

void check_finite(const Tensor& t, const char* op_name) {
  i64 n = t.numel();
  if (t.dtype() == DType::F32) {
    auto d = t.data<const float>();
    for (i64 i = 0; i < n; ++i)
      if (!std::isfinite(d[static_cast<size_t>(i)]))
        throw NumericError(op_name, "non-finite value at flat index " + std::to_string(i));
  } else {
    auto d = t.data<const double>();
    for (i64 i = 0; i < n; ++i)
      if (!std::isfinite(d[static_cast<size_t>(i)]))
        throw NumericError(op_name, "non-finite value at flat index " + std::to_string(i));
  }
}

}  // namespace weft
