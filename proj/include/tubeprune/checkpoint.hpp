#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tubeprune/tensor.hpp"

namespace tubeprune {

// Checkpoint container: magic "TSHD", u32 format version, then per tensor in
// sorted name order: u32 name length, name bytes, u32 rank, u64 extents,
// raw little-endian f64 data. Records run back-to-back until EOF.

namespace detail {

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

inline void put_f64(std::ostream& os, double d) {
  put_u64(os, std::bit_cast<std::uint64_t>(d));
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return true;
}

inline bool get_u64(std::istream& is, std::uint64_t& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return true;
}

inline bool get_f64(std::istream& is, double& d) {
  std::uint64_t v;
  if (!get_u64(is, v)) return false;
  d = std::bit_cast<double>(v);
  return true;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::map<std::string, Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write("TSHD", 4);
  detail::put_u32(os, detail::kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t e : t.shape()) detail::put_u64(os, e);
    for (double v : t.values()) detail::put_f64(os, v);
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "TSHD")
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  std::uint32_t version = 0;
  if (!detail::get_u32(is, version) || version != detail::kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version in " + path);
  std::map<std::string, Tensor> out;
  for (;;) {
    std::uint32_t name_len = 0;
    if (!detail::get_u32(is, name_len)) break;  // clean EOF
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw std::runtime_error("load_checkpoint: truncated name");
    std::uint32_t rank = 0;
    if (!detail::get_u32(is, rank))
      throw std::runtime_error("load_checkpoint: truncated rank");
    Shape shape(rank);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint64_t e = 0;
      if (!detail::get_u64(is, e))
        throw std::runtime_error("load_checkpoint: truncated shape");
      shape[i] = static_cast<std::size_t>(e);
      count *= shape[i];
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (!detail::get_f64(is, values[i]))
        throw std::runtime_error("load_checkpoint: truncated data for " + name);
    }
    out.emplace(name, Tensor::from(std::move(shape), std::move(values)));
  }
  return out;
}

}  // namespace tubeprune
