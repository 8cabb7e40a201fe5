#pragma once

#include <compare>
#include <cstddef>
#include <vector>

#include "tubeprune/nn.hpp"
#include "tubeprune/tensor.hpp"
#include "tubeprune/video.hpp"

namespace tubeprune {

// Cell extents of one spatiotemporal tubelet plus the token width.
struct TubeletConfig {
  std::size_t dt = 2, dh = 8, dw = 8;
  std::size_t embed_dim = 64;
};

// Tubelet grid bound to concrete video dimensions.
struct TubeletGrid {
  std::size_t frames, channels, height, width;
  std::size_t dt, dh, dw;

  std::size_t segments() const { return frames / dt; }      // L
  std::size_t grid_h() const { return height / dh; }
  std::size_t grid_w() const { return width / dw; }
  std::size_t spatial_cells() const { return grid_h() * grid_w(); }  // N
  std::size_t total_cells() const { return segments() * spatial_cells(); }  // M
  std::size_t cell_volume() const { return dt * dh * dw * channels; }
};

inline TubeletGrid make_grid(std::size_t frames, std::size_t channels,
                             std::size_t height, std::size_t width,
                             const TubeletConfig& cfg) {
  detail::require(cfg.dt >= 1 && cfg.dh >= 1 && cfg.dw >= 1,
                  "make_grid: cell extents must be >= 1");
  detail::require(frames % cfg.dt == 0, "make_grid: T not divisible by dt");
  detail::require(height % cfg.dh == 0, "make_grid: H not divisible by dh");
  detail::require(width % cfg.dw == 0, "make_grid: W not divisible by dw");
  TubeletGrid g{frames, channels, height, width, cfg.dt, cfg.dh, cfg.dw};
  detail::require(g.total_cells() >= 1, "make_grid: empty grid");
  return g;
}

inline TubeletGrid make_grid(const VideoTensor& v, const TubeletConfig& cfg) {
  return make_grid(v.frames, v.channels, v.height, v.width, cfg);
}

struct CellCoord {
  std::size_t t, h, w;
  auto operator<=>(const CellCoord&) const = default;
};

// Per-token provenance: either a grid cell or a fusion product.
struct Origin {
  bool fused = false;
  CellCoord cell{0, 0, 0};

  static Origin at(std::size_t t, std::size_t h, std::size_t w) {
    return Origin{false, {t, h, w}};
  }
  static Origin fused_token() { return Origin{true, {0, 0, 0}}; }
  bool operator==(const Origin&) const = default;
};

// Temporal-major row-major cell enumeration: index = (t * gh + h) * gw + w.
inline std::size_t cell_index(const TubeletGrid& g, const CellCoord& c) {
  return (c.t * g.grid_h() + c.h) * g.grid_w() + c.w;
}

inline CellCoord cell_at(const TubeletGrid& g, std::size_t index) {
  detail::require(index < g.total_cells(), "cell_at: index out of range");
  const std::size_t w = index % g.grid_w();
  const std::size_t h = (index / g.grid_w()) % g.grid_h();
  const std::size_t t = index / g.spatial_cells();
  return {t, h, w};
}

struct PixelBox {
  std::size_t t0, t1, h0, h1, w0, w1;  // half-open
};

inline PixelBox index_to_region(const TubeletGrid& g, const Origin& origin) {
  if (origin.fused)
    throw std::invalid_argument("index_to_region: fused token has no region");
  const CellCoord& c = origin.cell;
  detail::require(c.t < g.segments() && c.h < g.grid_h() && c.w < g.grid_w(),
                  "index_to_region: cell outside grid");
  return PixelBox{c.t * g.dt, (c.t + 1) * g.dt, c.h * g.dh, (c.h + 1) * g.dh,
                  c.w * g.dw, (c.w + 1) * g.dw};
}

// Cell pixels flattened in (local t, channel, local h, local w) order.
inline std::vector<double> flatten_cell(const VideoTensor& v,
                                        const TubeletGrid& g,
                                        const CellCoord& c) {
  std::vector<double> out;
  out.reserve(g.cell_volume());
  const PixelBox box = index_to_region(g, Origin::at(c.t, c.h, c.w));
  for (std::size_t t = box.t0; t < box.t1; ++t)
    for (std::size_t ch = 0; ch < v.channels; ++ch)
      for (std::size_t y = box.h0; y < box.h1; ++y)
        for (std::size_t x = box.w0; x < box.w1; ++x)
          out.push_back(v.at(t, ch, y, x));
  return out;
}

// Per-layer token sequence. CLS handles are filled in by the model that owns
// the learned tokens; tokenize() itself produces the tubelet rows.
struct TokenState {
  Tensor act_cls;   // 1 x D
  Tensor priv_cls;  // 1 x D
  Tensor tokens;    // M x D
  std::vector<Origin> origin;

  std::size_t live_count() const { return origin.size(); }
};

// Embed every non-overlapping cell as an affine map of its flattened pixels
// plus the positional row. Equivalent to a 3D convolution whose kernel equals
// its stride.
inline TokenState tokenize(const VideoTensor& video, const TubeletConfig& cfg,
                           const Tensor& embed_w, const Tensor& embed_b,
                           const Tensor& pos) {
  const TubeletGrid g = make_grid(video, cfg);
  const std::size_t m = g.total_cells(), vol = g.cell_volume();
  detail::require(embed_w.shape().size() == 2 && embed_w.rows() == vol &&
                      embed_w.cols() == cfg.embed_dim,
                  "tokenize: embedding weight shape mismatch");
  detail::require(embed_b.size() == cfg.embed_dim,
                  "tokenize: embedding bias shape mismatch");
  detail::require(pos.shape().size() == 2 && pos.rows() == m &&
                      pos.cols() == cfg.embed_dim,
                  "tokenize: positional table shape mismatch");
  std::vector<double> cells;
  cells.reserve(m * vol);
  TokenState st;
  st.origin.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const CellCoord c = cell_at(g, i);
    const std::vector<double> flat = flatten_cell(video, g, c);
    cells.insert(cells.end(), flat.begin(), flat.end());
    st.origin.push_back(Origin::at(c.t, c.h, c.w));
  }
  const Tensor cell_matrix = Tensor::from({m, vol}, std::move(cells));
  st.tokens = add(linear(cell_matrix, embed_w, embed_b), pos);
  return st;
}

// Replicate a spatial kernel dt times along the temporal axis and divide by
// dt, so a temporally constant video embeds exactly like one frame under the
// original 2D kernel.
inline Tensor inflate_embedding(const Tensor& spatial_w, std::size_t dt) {
  detail::require(dt >= 1, "inflate_embedding: dt must be >= 1");
  detail::require(spatial_w.shape().size() == 2,
                  "inflate_embedding: weights must be 2-D");
  const std::size_t vol2d = spatial_w.rows(), d = spatial_w.cols();
  Tensor out = Tensor::zeros({dt * vol2d, d});
  const double inv = 1.0 / static_cast<double>(dt);
  for (std::size_t t = 0; t < dt; ++t)
    for (std::size_t i = 0; i < vol2d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        out.values()[(t * vol2d + i) * d + j] = inv * spatial_w.values()[i * d + j];
  return out;
}

// Bilinear interpolation of a square spatial table to a new square grid,
// replicated over L temporal segments.
inline Tensor interpolate_positions(const Tensor& pos2d, std::size_t target_n,
                                    std::size_t segments) {
  detail::require(pos2d.shape().size() == 2,
                  "interpolate_positions: table must be 2-D");
  detail::require(segments >= 1, "interpolate_positions: L must be >= 1");
  const std::size_t n_src = pos2d.rows(), d = pos2d.cols();
  const auto isqrt = [](std::size_t n) {
    std::size_t r = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
    while (r * r > n) --r;
    while ((r + 1) * (r + 1) <= n) ++r;
    return r;
  };
  const std::size_t s_src = isqrt(n_src), s_dst = isqrt(target_n);
  detail::require(s_src * s_src == n_src && s_dst * s_dst == target_n,
                  "interpolate_positions: grids must be perfect squares");
  std::vector<double> plane(target_n * d);
  for (std::size_t gy = 0; gy < s_dst; ++gy) {
    for (std::size_t gx = 0; gx < s_dst; ++gx) {
      // corner-aligned source coordinates
      const double sy = (s_dst > 1 && s_src > 1)
                            ? static_cast<double>(gy) * (s_src - 1) / (s_dst - 1)
                            : 0.0;
      const double sx = (s_dst > 1 && s_src > 1)
                            ? static_cast<double>(gx) * (s_src - 1) / (s_dst - 1)
                            : 0.0;
      const std::size_t y0 = static_cast<std::size_t>(sy);
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t y1 = std::min(y0 + 1, s_src - 1);
      const std::size_t x1 = std::min(x0 + 1, s_src - 1);
      const double fy = sy - static_cast<double>(y0);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t j = 0; j < d; ++j) {
        const auto src = [&](std::size_t yy, std::size_t xx) {
          return pos2d.values()[(yy * s_src + xx) * d + j];
        };
        const double top = (1.0 - fx) * src(y0, x0) + fx * src(y0, x1);
        const double bot = (1.0 - fx) * src(y1, x0) + fx * src(y1, x1);
        plane[(gy * s_dst + gx) * d + j] = (1.0 - fy) * top + fy * bot;
      }
    }
  }
  Tensor out = Tensor::zeros({segments * target_n, d});
  for (std::size_t seg = 0; seg < segments; ++seg)
    std::copy(plane.begin(), plane.end(),
              out.values().begin() + seg * target_n * d);
  return out;
}

}  // namespace tubeprune
