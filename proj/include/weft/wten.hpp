#pragma once

#include <utility>

#include "weft/tensor.hpp"

namespace weft::wten {

// WTEN v1 container: magic "WTEN", u16 version, u32 tensor count; per tensor
// u16 name length, UTF-8 name, u8 dtype (0 = f32), u8 ndim, ndim x u32 dims,
// little-endian f32 payload. F64 tensors are stored as f32.

using NamedTensor = std::pair<std::string, Tensor>;

void write(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read(const std::string& path);

}  // namespace weft::wten
