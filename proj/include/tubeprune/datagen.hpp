#pragma once

#include <cmath>
#include <cstddef>
#include <string_view>
#include <vector>

#include "tubeprune/dataset.hpp"
#include "tubeprune/rng.hpp"
#include "tubeprune/tokenizer.hpp"
#include "tubeprune/video.hpp"

namespace tubeprune {

struct PrivacyBox {
  std::size_t row0 = 0, row1 = 8, col0 = 0, col1 = 8;  // half-open pixel box
};

// Synthetic corpus where the utility signal is a moving bright blob (the
// class selects sweep direction and lane, with brightness ramping over time
// so trajectory direction survives temporal pooling) and the privacy signal
// is a static banded patch inside a fixed region. The two signals occupy
// disjoint pixels, so blanking the region provably removes one and not the
// other.
struct SyntheticConfig {
  std::size_t frames = 16, channels = 3, height = 32, width = 32;
  std::size_t actions = 4;       // A, up to 8 supported
  std::size_t attrs = 3;         // P
  PrivacyBox box{};
  double noise_sigma = 0.05;
  std::size_t train_size = 512, test_size = 256;
  std::uint64_t seed = 42;

  void validate() const {
    detail::require(actions >= 2 && actions <= 8,
                    "datagen: action classes must be in [2, 8]");
    detail::require(attrs >= 1, "datagen: need at least 1 attribute");
    detail::require(box.row0 < box.row1 && box.row1 <= height &&
                        box.col0 < box.col1 && box.col1 <= width,
                    "datagen: privacy box outside frame");
    detail::require(box.row1 - box.row0 >= attrs,
                    "datagen: privacy box too small for attribute bands");
    detail::require(noise_sigma >= 0.0, "datagen: negative noise");
  }
};

// The privacy box must tile exactly onto tubelet cells so pruning
// localization is well defined.
inline void check_alignment(const SyntheticConfig& cfg, const TubeletConfig& tub) {
  detail::require(cfg.box.row0 % tub.dh == 0 && cfg.box.row1 % tub.dh == 0 &&
                      cfg.box.col0 % tub.dw == 0 && cfg.box.col1 % tub.dw == 0,
                  "datagen: privacy region not tubelet-aligned");
}

namespace detail {

struct Trajectory {
  int axis;      // 0 = horizontal sweep, 1 = vertical sweep
  bool forward;  // sweep direction along the axis
  double lane;   // fixed coordinate on the other axis
};

inline Trajectory trajectory_of(std::size_t action, const SyntheticConfig& cfg) {
  const int axis = (action % 4 < 2) ? 0 : 1;
  const bool forward = (action % 2) == 0;
  const double lane = (action < 4)
                          ? (axis == 0 ? cfg.height : cfg.width) * 0.5
                          : (axis == 0 ? cfg.height : cfg.width) * 0.75;
  return {axis, forward, lane};
}

// Attribute band j covers rows [row0 + j*span/P, row0 + (j+1)*span/P).
inline std::pair<std::size_t, std::size_t> attr_band(const PrivacyBox& box,
                                                     std::size_t attrs,
                                                     std::size_t j) {
  const std::size_t span = box.row1 - box.row0;
  const std::size_t a = box.row0 + (j * span) / attrs;
  const std::size_t b = box.row0 + ((j + 1) * span) / attrs;
  return {a, b};
}

inline constexpr double kBlobSigma = 2.2;
inline constexpr double kBlobMargin = 3.0;
inline constexpr double kBandHigh = 0.85;
inline constexpr double kBandLow = 0.15;

}  // namespace detail

// Blob center at frame t for a given action class.
inline std::pair<double, double> blob_center(std::size_t action, std::size_t t,
                                             const SyntheticConfig& cfg) {
  const detail::Trajectory tr = detail::trajectory_of(action, cfg);
  const double extent = (tr.axis == 0) ? cfg.width : cfg.height;
  const double span = extent - 2.0 * detail::kBlobMargin;
  const double frac = (cfg.frames > 1)
                          ? static_cast<double>(t) / (cfg.frames - 1)
                          : 0.0;
  const double p = detail::kBlobMargin + span * (tr.forward ? frac : 1.0 - frac);
  return (tr.axis == 0) ? std::make_pair(p, tr.lane)   // (x, y)
                        : std::make_pair(tr.lane, p);
}

inline VideoTensor render_sample(std::size_t y_action,
                                 const std::vector<int>& y_priv,
                                 const SyntheticConfig& cfg, Rng& noise_rng) {
  VideoTensor v = VideoTensor::zeros(cfg.frames, cfg.channels, cfg.height,
                                     cfg.width);
  // static privacy patch: one band per attribute
  for (std::size_t j = 0; j < cfg.attrs; ++j) {
    const auto [r0, r1] = detail::attr_band(cfg.box, cfg.attrs, j);
    const double val = y_priv[j] ? detail::kBandHigh : detail::kBandLow;
    for (std::size_t t = 0; t < cfg.frames; ++t)
      for (std::size_t c = 0; c < cfg.channels; ++c)
        for (std::size_t y = r0; y < r1; ++y)
          for (std::size_t x = cfg.box.col0; x < cfg.box.col1; ++x)
            v.at(t, c, y, x) = val;
  }
  // moving blob with a brightness ramp over time
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    const auto [cx, cy] = blob_center(y_action, t, cfg);
    const double amp =
        0.55 + 0.45 * ((cfg.frames > 1)
                           ? static_cast<double>(t) / (cfg.frames - 1)
                           : 0.0);
    const double inv2s2 = 1.0 / (2.0 * detail::kBlobSigma * detail::kBlobSigma);
    const long reach = std::lround(3.0 * detail::kBlobSigma);
    for (long dy = -reach; dy <= reach; ++dy) {
      for (long dx = -reach; dx <= reach; ++dx) {
        const long y = std::lround(cy) + dy;
        const long x = std::lround(cx) + dx;
        if (y < 0 || x < 0 || y >= static_cast<long>(cfg.height) ||
            x >= static_cast<long>(cfg.width))
          continue;
        const double ddx = static_cast<double>(x) - cx;
        const double ddy = static_cast<double>(y) - cy;
        const double g = amp * std::exp(-(ddx * ddx + ddy * ddy) * inv2s2);
        for (std::size_t c = 0; c < cfg.channels; ++c)
          v.at(t, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) += g;
      }
    }
  }
  if (cfg.noise_sigma > 0.0) {
    for (double& p : v.data) p += cfg.noise_sigma * noise_rng.normal();
  }
  v.clamp_unit();
  return v;
}

// Labels are sampled independently and uniformly so the two tasks carry no
// spurious correlation.
inline std::vector<LabeledVideo> generate_split(const SyntheticConfig& cfg,
                                                std::string_view split,
                                                std::size_t count) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).fork("datagen").fork(split);
  std::vector<LabeledVideo> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    LabeledVideo s;
    s.y_action = rng.index(cfg.actions);
    s.y_priv.resize(cfg.attrs);
    for (std::size_t j = 0; j < cfg.attrs; ++j)
      s.y_priv[j] = static_cast<int>(rng.index(2));
    s.video = render_sample(s.y_action, s.y_priv, cfg, rng);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<LabeledVideo> generate_train(const SyntheticConfig& cfg) {
  return generate_split(cfg, "train", cfg.train_size);
}
inline std::vector<LabeledVideo> generate_test(const SyntheticConfig& cfg) {
  return generate_split(cfg, "test", cfg.test_size);
}

// Ground-truth set of tubelet cells overlapping the privacy region, for
// every temporal segment.
inline std::vector<CellCoord> privacy_cells(const SyntheticConfig& cfg,
                                            const TubeletConfig& tub) {
  check_alignment(cfg, tub);
  const TubeletGrid g = make_grid(cfg.frames, cfg.channels, cfg.height,
                                  cfg.width, tub);
  std::vector<CellCoord> out;
  for (std::size_t t = 0; t < g.segments(); ++t)
    for (std::size_t h = cfg.box.row0 / tub.dh; h < cfg.box.row1 / tub.dh; ++h)
      for (std::size_t w = cfg.box.col0 / tub.dw; w < cfg.box.col1 / tub.dw; ++w)
        out.push_back({t, h, w});
  return out;
}

// Closed-form motion classifier: the sign of the frame-difference centroid
// displacement gives the sweep direction, and the motion-energy centroid
// gives the lane.
inline std::size_t motion_oracle(const VideoTensor& v, const SyntheticConfig& cfg) {
  double disp_x = 0.0, disp_y = 0.0;
  double energy_cx = 0.0, energy_cy = 0.0, energy = 0.0;
  for (std::size_t t = 0; t + 1 < v.frames; ++t) {
    double px = 0.0, py = 0.0, pw = 0.0;  // centroid of positive diff
    double nx = 0.0, ny = 0.0, nw = 0.0;  // centroid of negative diff
    for (std::size_t y = 0; y < v.height; ++y) {
      for (std::size_t x = 0; x < v.width; ++x) {
        double d = 0.0;
        for (std::size_t c = 0; c < v.channels; ++c)
          d += v.at(t + 1, c, y, x) - v.at(t, c, y, x);
        const double mag = std::fabs(d);
        energy_cx += mag * x;
        energy_cy += mag * y;
        energy += mag;
        if (d > 0.0) {
          px += d * x;
          py += d * y;
          pw += d;
        } else if (d < 0.0) {
          nx += -d * x;
          ny += -d * y;
          nw += -d;
        }
      }
    }
    if (pw > 0.0 && nw > 0.0) {
      disp_x += px / pw - nx / nw;
      disp_y += py / pw - ny / nw;
    }
  }
  const int axis = (std::fabs(disp_x) >= std::fabs(disp_y)) ? 0 : 1;
  const bool forward = (axis == 0) ? disp_x > 0.0 : disp_y > 0.0;
  std::size_t cls = (axis == 0 ? 0 : 2) + (forward ? 0 : 1);
  if (cfg.actions > 4 && energy > 0.0) {
    const double lane = (axis == 0) ? energy_cy / energy : energy_cx / energy;
    const double extent = (axis == 0) ? cfg.height : cfg.width;
    if (std::fabs(lane - 0.75 * extent) < std::fabs(lane - 0.5 * extent))
      cls += 4;
  }
  return std::min(cls, cfg.actions - 1);
}

// Closed-form attribute classifier: band mean above 0.5 means the bit is set.
inline std::vector<int> appearance_oracle(const VideoTensor& v,
                                          const SyntheticConfig& cfg) {
  std::vector<int> bits(cfg.attrs, 0);
  for (std::size_t j = 0; j < cfg.attrs; ++j) {
    const auto [r0, r1] = detail::attr_band(cfg.box, cfg.attrs, j);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < v.frames; ++t)
      for (std::size_t c = 0; c < v.channels; ++c)
        for (std::size_t y = r0; y < r1; ++y)
          for (std::size_t x = cfg.box.col0; x < cfg.box.col1; ++x) {
            sum += v.at(t, c, y, x);
            ++n;
          }
    bits[j] = (sum / static_cast<double>(n) > 0.5) ? 1 : 0;
  }
  return bits;
}

}  // namespace tubeprune
