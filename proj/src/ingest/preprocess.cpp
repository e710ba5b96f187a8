#include "geosdg/ingest/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "geosdg/error.hpp"

namespace geosdg::ingest {

BandStats compute_stats(std::span<const Tile> tiles) {
  BandStats s;
  if (tiles.empty()) return s;
  const std::size_t bands = tiles.front().bands();
  std::vector<double> sum(bands, 0.0);
  std::vector<std::size_t> count(bands, 0);
  for (const auto& t : tiles) {
    if (t.bands() != bands) throw ShapeError("compute_stats: tile " + t.tile_id + " has a different band count");
    const std::size_t px = t.height() * t.width();
    for (std::size_t b = 0; b < bands; ++b) {
      const float* p = t.raster.ptr() + b * px;
      for (std::size_t i = 0; i < px; ++i) sum[b] += p[i];
      count[b] += px;
    }
  }
  s.mean.resize(bands);
  for (std::size_t b = 0; b < bands; ++b) s.mean[b] = count[b] ? sum[b] / static_cast<double>(count[b]) : 0.0;
  std::vector<double> sq(bands, 0.0);
  for (const auto& t : tiles) {
    const std::size_t px = t.height() * t.width();
    for (std::size_t b = 0; b < bands; ++b) {
      const float* p = t.raster.ptr() + b * px;
      for (std::size_t i = 0; i < px; ++i) sq[b] += (p[i] - s.mean[b]) * (p[i] - s.mean[b]);
    }
  }
  s.std.resize(bands);
  for (std::size_t b = 0; b < bands; ++b) s.std[b] = count[b] ? std::sqrt(sq[b] / static_cast<double>(count[b])) : 0.0;
  return s;
}

BandStats compute_stats(const Manifest& m) {
  const auto tiles = load_tiles(m);
  return compute_stats(tiles);
}

Tensor<float> standardize(const Tensor<float>& raster, const BandStats& stats, double eps) {
  if (raster.rank() != 3 || raster.dim(0) != stats.bands()) {
    throw ShapeError("standardize: raster " + shape_str(raster.shape()) + " vs stats with " +
                     std::to_string(stats.bands()) + " bands");
  }
  Tensor<float> out(raster.shape());
  const std::size_t px = raster.dim(1) * raster.dim(2);
  for (std::size_t b = 0; b < stats.bands(); ++b) {
    const double denom = std::max(stats.std[b], eps);
    const float* src = raster.ptr() + b * px;
    float* dst = out.ptr() + b * px;
    for (std::size_t i = 0; i < px; ++i) dst[i] = static_cast<float>((src[i] - stats.mean[b]) / denom);
  }
  if (!out.all_finite()) throw NumericalError("standardize: non-finite output");
  return out;
}

Tile standardize(const Tile& tile, const BandStats& stats, double eps) {
  Tile out = tile;
  out.raster = standardize(tile.raster, stats, eps);
  return out;
}

Tensor<float> resample_bilinear(const Tensor<float>& raster, std::size_t out_h, std::size_t out_w) {
  if (raster.rank() != 3) throw ShapeError("resample: raster must be [bands,H,W]");
  if (out_h == 0 || out_w == 0) throw ConfigError("resample: target size must be positive");
  const std::size_t bands = raster.dim(0), h = raster.dim(1), w = raster.dim(2);
  if (h == out_h && w == out_w) return raster;
  auto axis = [](std::size_t in, std::size_t out) {
    std::vector<std::pair<std::size_t, double>> lo(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      double x = (static_cast<double>(i) + 0.5) * ratio - 0.5;
      x = std::clamp(x, 0.0, static_cast<double>(in - 1));
      auto i0 = static_cast<std::size_t>(std::floor(x));
      if (i0 + 1 >= in) i0 = in >= 2 ? in - 2 : 0;
      lo[i] = {i0, in >= 2 ? x - static_cast<double>(i0) : 0.0};
    }
    return lo;
  };
  const auto ry = axis(h, out_h), rx = axis(w, out_w);
  Tensor<float> out(Shape{bands, out_h, out_w});
  for (std::size_t b = 0; b < bands; ++b) {
    const float* src = raster.ptr() + b * h * w;
    float* dst = out.ptr() + b * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto [y0, fy] = ry[y];
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto [x0, fx] = rx[x];
        const std::size_t x1 = std::min(x0 + 1, w - 1);
        const double top = src[y0 * w + x0] * (1 - fx) + src[y0 * w + x1] * fx;
        const double bot = src[y1 * w + x0] * (1 - fx) + src[y1 * w + x1] * fx;
        dst[y * out_w + x] = static_cast<float>(top * (1 - fy) + bot * fy);
      }
    }
  }
  return out;
}

}  // namespace geosdg::ingest
