#include "weft/wten.hpp"

#include <cstring>
#include <fstream>

namespace weft::wten {

namespace {

constexpr char kMagic[4] = {'W', 'T', 'E', 'N'};
constexpr std::uint16_t kVersion = 1;

// The format is little-endian; every supported target here is too, so plain
// byte copies of the fixed-width types are the serialization.
template <class T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

template <class T>
T take(const std::string& buf, size_t& off, const std::string& path, const char* what) {
  if (off + sizeof(T) > buf.size())
    fail(path + ": truncated WTEN file, needed " + std::to_string(sizeof(T)) + " bytes for " + what +
         " at offset " + std::to_string(off));
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void write(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::string buf;
  buf.append(kMagic, 4);
  put<std::uint16_t>(buf, kVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xffff) fail("wten: tensor name too long: " + name);
    if (t.rank() > 0xff) fail("wten: tensor rank too large");
    put<std::uint16_t>(buf, static_cast<std::uint16_t>(name.size()));
    buf.append(name);
    put<std::uint8_t>(buf, 0);  // f32
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(t.rank()));
    for (i64 d : t.shape()) put<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
    if (t.dtype() == DType::F32) {
      buf.append(reinterpret_cast<const char*>(t.raw()), t.raw_size());
    } else {
      for (i64 i = 0; i < t.numel(); ++i) put<float>(buf, static_cast<float>(t.at(i)));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail("wten: cannot open for writing: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) fail("wten: write failed: " + path);
}

std::vector<NamedTensor> read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("wten: cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  size_t off = 0;
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    fail(path + ": bad WTEN magic at offset 0");
  off = 4;
  auto version = take<std::uint16_t>(buf, off, path, "version");
  if (version != kVersion)
    fail(path + ": unsupported WTEN version " + std::to_string(version) + " at offset 4");
  auto count = take<std::uint32_t>(buf, off, path, "tensor count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name_len = take<std::uint16_t>(buf, off, path, "name length");
    if (off + name_len > buf.size())
      fail(path + ": truncated tensor name at offset " + std::to_string(off));
    std::string name(buf.data() + off, name_len);
    off += name_len;
    auto dtype = take<std::uint8_t>(buf, off, path, "dtype");
    if (dtype != 0)
      fail(path + ": unsupported dtype code " + std::to_string(dtype) + " at offset " +
           std::to_string(off - 1));
    auto ndim = take<std::uint8_t>(buf, off, path, "ndim");
    Shape shape(ndim);
    for (int d = 0; d < ndim; ++d) {
      auto dim = take<std::uint32_t>(buf, off, path, "dim");
      if (dim == 0)
        fail(path + ": zero dimension in tensor '" + name + "' at offset " + std::to_string(off - 4));
      shape[static_cast<size_t>(d)] = static_cast<i64>(dim);
    }
    i64 n = shape_numel(shape);
    if (off + static_cast<size_t>(n) * 4 > buf.size())
      fail(path + ": truncated payload for tensor '" + name + "' at offset " + std::to_string(off) +
           " (need " + std::to_string(n * 4) + " bytes)");
    Tensor t(shape, DType::F32);
    std::memcpy(t.data<float>().data(), buf.data() + off, static_cast<size_t>(n) * 4);
    off += static_cast<size_t>(n) * 4;
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace weft::wten
