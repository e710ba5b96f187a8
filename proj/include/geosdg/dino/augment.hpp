#pragma once

#include <cstdint>
#include <vector>

#include "geosdg/numerics/tensor.hpp"

namespace geosdg::dino {

/// Multi-crop augmentation settings. Jitters are in standardized units.
struct AugmentSpec {
  std::size_t global_size = 32;
  std::size_t local_size = 16;
  std::size_t n_global = 2;
  std::size_t n_local = 4;
  double global_scale_min = 0.7, global_scale_max = 1.0;
  double local_scale_min = 0.2, local_scale_max = 0.35;  // area fractions; 32 px tiles are tiny
  double ratio_min = 3.0 / 4.0, ratio_max = 4.0 / 3.0;
  bool flips = true;
  bool rot90 = true;
  double gain_jitter = 0.2;    ///< per-band gain drawn from [1-g, 1+g]
  double offset_jitter = 0.2;  ///< per-band offset std
  double noise_std = 0.05;

  /// Center crops only: no resize, flip, rotation, jitter or noise.
  static AugmentSpec identity(std::size_t global_size, std::size_t local_size, std::size_t n_global = 2,
                              std::size_t n_local = 0);
};

void validate(const AugmentSpec& s);

/// Everything needed to recompute a view from its source tile.
struct ViewProvenance {
  std::uint64_t seed = 0;
  std::size_t view_index = 0;
  bool global = true;
  std::size_t crop_x = 0, crop_y = 0, crop_w = 0, crop_h = 0;
  bool flip_h = false, flip_v = false;
  int rot90 = 0;  ///< counter-clockwise quarter turns
  std::vector<double> gains, offsets;
  std::uint64_t noise_seed = 0;
  double noise_std = 0;
};

struct ViewBatch {
  std::vector<Tensor<float>> global;
  std::vector<Tensor<float>> local;
  std::vector<ViewProvenance> provenance;  ///< globals first, then locals

  std::size_t size() const { return global.size() + local.size(); }
  const Tensor<float>& view(std::size_t i) const { return i < global.size() ? global[i] : local[i - global.size()]; }
};

/// Deterministic in (tile, spec, seed). ConfigError when the tile is smaller
/// than the global crop.
ViewBatch augment(const Tensor<float>& tile, const AugmentSpec& spec, std::uint64_t seed);

/// Re-applies a recorded view to a tile.
Tensor<float> render_view(const Tensor<float>& tile, const ViewProvenance& p, std::size_t out_size);

}  // namespace geosdg::dino
