#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace caia {

/// Binary tensor container: "CAIA" magic, u32 format version, u32 dtype
/// (0 = float32), u32 rank, u32 dims, then row-major little-endian float32
/// payload. All multi-byte fields little-endian.
inline constexpr std::uint32_t kTensorFileVersion = 1;

struct TensorData {
  std::vector<std::size_t> dims;
  std::vector<double> values;

  std::size_t count() const {
    std::size_t n = dims.empty() ? 0 : 1;
    for (std::size_t d : dims) n *= d;
    return n;
  }
};

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xFF));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::vector<unsigned char> tensor_file_bytes(const std::vector<std::size_t>& dims,
                                                    const double* values) {
  std::vector<unsigned char> out;
  out.reserve(16 + 4 * dims.size());
  out.insert(out.end(), {'C', 'A', 'I', 'A'});
  detail::put_u32(out, kTensorFileVersion);
  detail::put_u32(out, 0);  // dtype float32
  detail::put_u32(out, static_cast<std::uint32_t>(dims.size()));
  std::size_t n = dims.empty() ? 0 : 1;
  for (std::size_t d : dims) {
    detail::put_u32(out, static_cast<std::uint32_t>(d));
    n *= d;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const float f = static_cast<float>(values[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::put_u32(out, bits);
  }
  return out;
}

inline TensorData parse_tensor_file(const std::vector<unsigned char>& bytes,
                                    const std::string& what = "tensor file") {
  if (bytes.size() < 16 || bytes[0] != 'C' || bytes[1] != 'A' || bytes[2] != 'I' || bytes[3] != 'A') {
    throw std::runtime_error(what + ": bad magic (not a CAIA tensor file)");
  }
  const std::uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != kTensorFileVersion) {
    throw std::runtime_error(what + ": unsupported format version " + std::to_string(version));
  }
  const std::uint32_t dtype = detail::get_u32(bytes.data() + 8);
  if (dtype != 0) throw std::runtime_error(what + ": unsupported dtype code " + std::to_string(dtype));
  const std::uint32_t rank = detail::get_u32(bytes.data() + 12);
  std::size_t offset = 16;
  if (bytes.size() < offset + 4 * rank) throw std::runtime_error(what + ": truncated header");
  TensorData t;
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    t.dims.push_back(detail::get_u32(bytes.data() + offset));
    offset += 4;
    n *= t.dims.back();
  }
  if (rank == 0) n = 0;
  if (bytes.size() != offset + 4 * n) {
    throw std::runtime_error(what + ": payload size mismatch (expected " + std::to_string(4 * n) +
                             " bytes)");
  }
  t.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = detail::get_u32(bytes.data() + offset + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    t.values[i] = static_cast<double>(f);
  }
  return t;
}

inline void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_tensor_file(const std::string& path, const std::vector<std::size_t>& dims,
                              const double* values) {
  write_file_bytes(path, tensor_file_bytes(dims, values));
}

inline TensorData read_tensor_file(const std::string& path) {
  return parse_tensor_file(read_file_bytes(path), path);
}

/// FNV-1a 64-bit content digest, hex-encoded; used by dataset and parameter
/// manifests.
inline std::string fnv1a_hex(const std::vector<unsigned char>& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace caia
