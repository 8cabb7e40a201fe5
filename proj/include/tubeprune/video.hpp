#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "tubeprune/checkpoint.hpp"
#include "tubeprune/tensor.hpp"

namespace tubeprune {

// Dense T x C x H x W pixel volume with values in [0, 1].
struct VideoTensor {
  std::size_t frames = 0, channels = 0, height = 0, width = 0;
  std::vector<double> data;  // T-C-H-W order

  static VideoTensor zeros(std::size_t t, std::size_t c, std::size_t h,
                           std::size_t w) {
    VideoTensor v;
    v.frames = t;
    v.channels = c;
    v.height = h;
    v.width = w;
    v.data.assign(t * c * h * w, 0.0);
    return v;
  }

  std::size_t size() const { return frames * channels * height * width; }

  std::size_t index(std::size_t t, std::size_t c, std::size_t h,
                    std::size_t w) const {
    return ((t * channels + c) * height + h) * width + w;
  }
  double at(std::size_t t, std::size_t c, std::size_t h, std::size_t w) const {
    return data[index(t, c, h, w)];
  }
  double& at(std::size_t t, std::size_t c, std::size_t h, std::size_t w) {
    return data[index(t, c, h, w)];
  }

  bool in_unit_range() const {
    for (double v : data)
      if (!(v >= 0.0 && v <= 1.0)) return false;
    return true;
  }

  void clamp_unit() {
    for (double& v : data) v = std::clamp(v, 0.0, 1.0);
  }
};

// Raw video file: magic "TVID", u32 version, u32 T,C,H,W, then
// little-endian f64 pixels in T-C-H-W order.

namespace detail {
inline constexpr std::uint32_t kVideoVersion = 1;
}

inline void save_tvid(const std::string& path, const VideoTensor& v) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_tvid: cannot open " + path);
  os.write("TVID", 4);
  detail::put_u32(os, detail::kVideoVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(v.frames));
  detail::put_u32(os, static_cast<std::uint32_t>(v.channels));
  detail::put_u32(os, static_cast<std::uint32_t>(v.height));
  detail::put_u32(os, static_cast<std::uint32_t>(v.width));
  for (double x : v.data) detail::put_f64(os, x);
  if (!os) throw std::runtime_error("save_tvid: write failed: " + path);
}

inline VideoTensor load_tvid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_tvid: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "TVID")
    throw std::runtime_error("load_tvid: bad magic in " + path);
  std::uint32_t version = 0;
  if (!detail::get_u32(is, version) || version != detail::kVideoVersion)
    throw std::runtime_error("load_tvid: unsupported version in " + path);
  std::uint32_t t, c, h, w;
  if (!detail::get_u32(is, t) || !detail::get_u32(is, c) ||
      !detail::get_u32(is, h) || !detail::get_u32(is, w))
    throw std::runtime_error("load_tvid: truncated header in " + path);
  VideoTensor v = VideoTensor::zeros(t, c, h, w);
  for (double& x : v.data) {
    if (!detail::get_f64(is, x))
      throw std::runtime_error("load_tvid: truncated data in " + path);
  }
  return v;
}

// P6 PPM (8-bit) dump of one frame; C=3 maps to RGB, C=1 to gray.
inline void save_ppm_frame(const std::string& path, const VideoTensor& v,
                           std::size_t frame) {
  detail::require(frame < v.frames, "save_ppm_frame: frame out of range");
  detail::require(v.channels == 1 || v.channels == 3,
                  "save_ppm_frame: needs 1 or 3 channels");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_ppm_frame: cannot open " + path);
  os << "P6\n" << v.width << " " << v.height << "\n255\n";
  for (std::size_t y = 0; y < v.height; ++y) {
    for (std::size_t x = 0; x < v.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t ch = (v.channels == 3) ? c : 0;
        const double val = std::clamp(v.at(frame, ch, y, x), 0.0, 1.0);
        os.put(static_cast<char>(std::lround(val * 255.0)));
      }
    }
  }
  if (!os) throw std::runtime_error("save_ppm_frame: write failed: " + path);
}

}  // namespace tubeprune
