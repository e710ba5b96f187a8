#include "geosdg/dino/augment.hpp"

#include <algorithm>
#include <cmath>

#include "geosdg/error.hpp"
#include "geosdg/ingest/preprocess.hpp"
#include "geosdg/numerics/rng.hpp"

namespace geosdg::dino {

AugmentSpec AugmentSpec::identity(std::size_t global_size, std::size_t local_size, std::size_t n_global,
                                  std::size_t n_local) {
  AugmentSpec s;
  s.global_size = global_size;
  s.local_size = local_size;
  s.n_global = n_global;
  s.n_local = n_local;
  s.global_scale_min = s.global_scale_max = 0;  // 0 marks "center crop at output size"
  s.local_scale_min = s.local_scale_max = 0;
  s.ratio_min = s.ratio_max = 1;
  s.flips = false;
  s.rot90 = false;
  s.gain_jitter = 0;
  s.offset_jitter = 0;
  s.noise_std = 0;
  return s;
}

void validate(const AugmentSpec& s) {
  if (s.global_size == 0 || s.local_size == 0) throw ConfigError("augment: crop sizes must be positive");
  if (s.n_global < 2) throw ConfigError("augment: at least 2 global views are required");
  auto scale_ok = [](double lo, double hi) { return lo >= 0 && hi <= 1 && lo <= hi; };
  if (!scale_ok(s.global_scale_min, s.global_scale_max) || !scale_ok(s.local_scale_min, s.local_scale_max)) {
    throw ConfigError("augment: crop scales must satisfy 0 <= min <= max <= 1");
  }
  if (!(s.ratio_min > 0 && s.ratio_min <= s.ratio_max)) throw ConfigError("augment: bad aspect ratio range");
  if (s.gain_jitter < 0 || s.gain_jitter >= 1 || s.offset_jitter < 0 || s.noise_std < 0) {
    throw ConfigError("augment: jitter and noise must be non-negative (gain jitter below 1)");
  }
}

namespace {

ViewProvenance draw(const Tensor<float>& tile, const AugmentSpec& s, std::uint64_t seed, std::size_t index,
                    bool global) {
  ViewProvenance p;
  p.seed = seed;
  p.view_index = index;
  p.global = global;
  Rng rng(derive_seed(seed, {index}));
  const std::size_t h = tile.dim(1), w = tile.dim(2);
  const std::size_t out = global ? s.global_size : s.local_size;
  const double lo = global ? s.global_scale_min : s.local_scale_min;
  const double hi = global ? s.global_scale_max : s.local_scale_max;
  if (hi == 0) {
    p.crop_w = std::min(out, w);
    p.crop_h = std::min(out, h);
  } else {
    const double area = rng.uniform(lo, hi) * static_cast<double>(h * w);
    const double ratio = std::exp(rng.uniform(std::log(s.ratio_min), std::log(s.ratio_max)));
    p.crop_w = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(std::sqrt(area * ratio))), 1, w);
    p.crop_h = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(std::sqrt(area / ratio))), 1, h);
  }
  if (hi == 0) {
    p.crop_x = (w - p.crop_w) / 2;
    p.crop_y = (h - p.crop_h) / 2;
  } else {
    p.crop_x = rng.below(w - p.crop_w + 1);
    p.crop_y = rng.below(h - p.crop_h + 1);
  }
  if (s.flips) {
    p.flip_h = rng.bernoulli(0.5);
    p.flip_v = rng.bernoulli(0.5);
  }
  if (s.rot90) p.rot90 = static_cast<int>(rng.below(4));
  const std::size_t bands = tile.dim(0);
  for (std::size_t b = 0; b < bands; ++b) {
    p.gains.push_back(s.gain_jitter > 0 ? rng.uniform(1 - s.gain_jitter, 1 + s.gain_jitter) : 1.0);
    p.offsets.push_back(s.offset_jitter > 0 ? rng.normal(0, s.offset_jitter) : 0.0);
  }
  p.noise_seed = rng.next_u64();
  p.noise_std = s.noise_std;
  return p;
}

}  // namespace

Tensor<float> render_view(const Tensor<float>& tile, const ViewProvenance& p, std::size_t out_size) {
  const std::size_t bands = tile.dim(0), h = tile.dim(1), w = tile.dim(2);
  Tensor<float> crop(Shape{bands, p.crop_h, p.crop_w});
  for (std::size_t b = 0; b < bands; ++b)
    for (std::size_t y = 0; y < p.crop_h; ++y)
      for (std::size_t x = 0; x < p.crop_w; ++x)
        crop[(b * p.crop_h + y) * p.crop_w + x] = tile[(b * h + p.crop_y + y) * w + p.crop_x + x];
  auto v = ingest::resample_bilinear(crop, out_size, out_size);

  const std::size_t n = out_size;
  auto src = [&](std::size_t b, std::size_t y, std::size_t x) {
    // inverse of: flip_h, then flip_v, then rotate counter-clockwise
    for (int r = 0; r < p.rot90; ++r) {
      const std::size_t ny = x, nx = n - 1 - y;
      y = ny;
      x = nx;
    }
    if (p.flip_v) y = n - 1 - y;
    if (p.flip_h) x = n - 1 - x;
    return v[(b * n + y) * n + x];
  };
  Tensor<float> out(Shape{bands, n, n});
  Rng noise(p.noise_seed);
  for (std::size_t b = 0; b < bands; ++b) {
    const float gain = static_cast<float>(p.gains.at(b));
    const float offset = static_cast<float>(p.offsets.at(b));
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        float val = src(b, y, x) * gain + offset;
        if (p.noise_std > 0) val += static_cast<float>(noise.normal(0, p.noise_std));
        out[(b * n + y) * n + x] = val;
      }
  }
  return out;
}

ViewBatch augment(const Tensor<float>& tile, const AugmentSpec& spec, std::uint64_t seed) {
  validate(spec);
  if (tile.rank() != 3) throw ShapeError("augment: tile must be [bands,H,W]");
  if (tile.dim(1) < spec.global_size || tile.dim(2) < spec.global_size) {
    throw ConfigError("augment: global crop " + std::to_string(spec.global_size) + " larger than tile " +
                      shape_str(tile.shape()));
  }
  ViewBatch vb;
  for (std::size_t i = 0; i < spec.n_global + spec.n_local; ++i) {
    const bool global = i < spec.n_global;
    auto p = draw(tile, spec, seed, i, global);
    auto v = render_view(tile, p, global ? spec.global_size : spec.local_size);
    (global ? vb.global : vb.local).push_back(std::move(v));
    vb.provenance.push_back(std::move(p));
  }
  return vb;
}

}  // namespace geosdg::dino
