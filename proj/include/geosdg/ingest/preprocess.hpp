#pragma once

#include <span>
#include <vector>

#include "geosdg/ingest/manifest.hpp"
#include "geosdg/ingest/tile.hpp"
#include "geosdg/numerics/tensor.hpp"

namespace geosdg::ingest {

struct BandStats {
  std::vector<double> mean;
  std::vector<double> std;  ///< population standard deviation

  std::size_t bands() const { return mean.size(); }
};

inline constexpr double kStdFloor = 1e-6;

/// Per-band mean and standard deviation over all pixels of all tiles.
BandStats compute_stats(std::span<const Tile> tiles);
BandStats compute_stats(const Manifest& m);

/// (x - mean) / max(std, eps) per band. Band mismatch is a ShapeError.
Tensor<float> standardize(const Tensor<float>& raster, const BandStats& stats, double eps = kStdFloor);
Tile standardize(const Tile& tile, const BandStats& stats, double eps = kStdFloor);

/// Bilinear resample of a [bands,H,W] raster to [bands,out_h,out_w] with
/// half-pixel centers and edge clamping. Same size returns a copy.
Tensor<float> resample_bilinear(const Tensor<float>& raster, std::size_t out_h, std::size_t out_w);

}  // namespace geosdg::ingest
