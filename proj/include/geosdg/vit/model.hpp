#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "geosdg/error.hpp"
#include "geosdg/numerics/autodiff.hpp"
#include "geosdg/numerics/tensor.hpp"
#include "geosdg/vit/config.hpp"
#include "geosdg/vit/params.hpp"

namespace geosdg::vit {

// ---------------------------------------------------------------------------
// patches

/// [bands, H, W] -> [tokens, bands * p * p]. Tokens run row-major over the
/// patch grid; each token is flattened as (band, row in patch, col in patch).
template <typename T>
Tensor<T> patchify(const Tensor<T>& tile, std::size_t patch) {
  if (tile.rank() != 3) throw ShapeError("patchify: expected [bands,H,W], got " + shape_str(tile.shape()));
  const std::size_t bands = tile.dim(0), h = tile.dim(1), w = tile.dim(2);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ShapeError("patchify: " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by patch " +
                     std::to_string(patch));
  }
  const std::size_t gh = h / patch, gw = w / patch, len = bands * patch * patch;
  Tensor<T> out(Shape{gh * gw, len});
  for (std::size_t gy = 0; gy < gh; ++gy)
    for (std::size_t gx = 0; gx < gw; ++gx) {
      T* dst = out.ptr() + (gy * gw + gx) * len;
      for (std::size_t b = 0; b < bands; ++b)
        for (std::size_t r = 0; r < patch; ++r)
          for (std::size_t c = 0; c < patch; ++c)
            *dst++ = tile[(b * h + gy * patch + r) * w + gx * patch + c];
    }
  return out;
}

/// Inverse of patchify.
template <typename T>
Tensor<T> unpatchify(const Tensor<T>& patches, std::size_t bands, std::size_t h, std::size_t w, std::size_t patch) {
  if (patch == 0 || h % patch != 0 || w % patch != 0) throw ShapeError("unpatchify: indivisible extents");
  const std::size_t gh = h / patch, gw = w / patch, len = bands * patch * patch;
  if (patches.shape() != Shape{gh * gw, len}) {
    throw ShapeError("unpatchify: patches " + shape_str(patches.shape()) + " do not match target raster");
  }
  Tensor<T> tile(Shape{bands, h, w});
  for (std::size_t gy = 0; gy < gh; ++gy)
    for (std::size_t gx = 0; gx < gw; ++gx) {
      const T* src = patches.ptr() + (gy * gw + gx) * len;
      for (std::size_t b = 0; b < bands; ++b)
        for (std::size_t r = 0; r < patch; ++r)
          for (std::size_t c = 0; c < patch; ++c)
            tile[(b * h + gy * patch + r) * w + gx * patch + c] = *src++;
    }
  return tile;
}

template <typename T>
ad::Var<T> patchify(ad::Var<T> tile, std::size_t patch) {
  const Shape s = tile.shape();
  return tile.tape()->record("patchify", patchify(tile.value(), patch), {tile},
                             [tile, s, patch](ad::Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                               t.accumulate(tile, unpatchify(g, s[0], s[1], s[2], patch));
                             });
}

/// Bilinear resampling matrix [dst*dst, src*src] between square grids
/// (half-pixel centers, edge clamped). Identity when dst == src.
template <typename T>
Tensor<T> grid_interpolation(std::size_t src, std::size_t dst) {
  auto axis = [&](std::size_t o, std::size_t& i0, std::size_t& i1, double& frac) {
    double pos = (static_cast<double>(o) + 0.5) * static_cast<double>(src) / static_cast<double>(dst) - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src - 1));
    i0 = static_cast<std::size_t>(std::floor(pos));
    i1 = std::min(i0 + 1, src - 1);
    frac = pos - static_cast<double>(i0);
  };
  Tensor<T> m(Shape{dst * dst, src * src});
  for (std::size_t oy = 0; oy < dst; ++oy)
    for (std::size_t ox = 0; ox < dst; ++ox) {
      std::size_t y0, y1, x0, x1;
      double fy, fx;
      axis(oy, y0, y1, fy);
      axis(ox, x0, x1, fx);
      const std::size_t row = oy * dst + ox;
      m.at(row, y0 * src + x0) += static_cast<T>((1 - fy) * (1 - fx));
      m.at(row, y0 * src + x1) += static_cast<T>((1 - fy) * fx);
      m.at(row, y1 * src + x0) += static_cast<T>(fy * (1 - fx));
      m.at(row, y1 * src + x1) += static_cast<T>(fy * fx);
    }
  return m;
}

// ---------------------------------------------------------------------------
// forward

/// Attention weights per layer, per head; each (tokens+1) x (tokens+1).
template <typename T>
using AttentionMaps = std::vector<std::vector<Tensor<T>>>;

template <typename T>
struct TapeForward {
  ad::Var<T> embedding;       ///< post-norm CLS token [1, dim]
  ad::Var<T> mean_embedding;  ///< post-norm mean of patch tokens [1, dim]
  ad::Var<T> logits;          ///< projection head output [1, proto_count]
  std::vector<std::vector<ad::Var<T>>> attention;
};

/// Places every parameter tensor on the tape, in layout order.
template <typename T>
std::vector<ad::Var<T>> bind_params(ad::Tape<T>& tape, const VitParams<T>& params, bool requires_grad) {
  std::vector<ad::Var<T>> vars;
  vars.reserve(params.count());
  for (const auto& t : params.tensors) vars.push_back(tape.leaf(t, requires_grad));
  return vars;
}

/// Encoder + projection head on a tape. `tile` is [bands, H, W] with H == W
/// divisible by the patch size; other sizes than config.image_size use
/// bilinearly interpolated positional embeddings.
template <typename T>
TapeForward<T> forward_on_tape(const ModelConfig& c, std::span<const ad::Var<T>> p, ad::Var<T> tile) {
  const auto& ts = tile.shape();
  if (ts.size() != 3 || ts[0] != c.bands || ts[1] != ts[2] || ts[1] % c.patch_size != 0) {
    throw ShapeError("vit forward: tile " + shape_str(ts) + " incompatible with bands=" + std::to_string(c.bands) +
                     ", patch=" + std::to_string(c.patch_size));
  }
  if (p.size() != ParamIndex::tail(c) + kTailTensors) throw ShapeError("vit forward: parameter count mismatch");
  const std::size_t grid = ts[1] / c.patch_size;
  const std::size_t tokens = grid * grid;

  auto x = ad::linear(patchify(tile, c.patch_size), p[ParamIndex::patch_w], p[ParamIndex::patch_b]);
  ad::Var<T> pos = p[ParamIndex::pos];
  if (grid != c.grid()) {
    auto& tape = *tile.tape();
    auto interp = tape.constant(grid_interpolation<T>(c.grid(), grid));
    pos = ad::concat_rows(ad::slice_rows(pos, 0, 1), ad::matmul(interp, ad::slice_rows(pos, 1, c.tokens())));
  }
  x = ad::add(ad::concat_rows(p[ParamIndex::cls], x), pos);

  TapeForward<T> out;
  const std::size_t hd = c.head_dim();
  for (std::size_t layer = 0; layer < c.depth; ++layer) {
    try {
      const auto b = ParamIndex::block(layer);
      auto h = ad::layer_norm(x, p[b.norm1_g], p[b.norm1_b]);
      auto q = ad::linear(h, p[b.q_w], p[b.q_b]);
      auto k = ad::linear(h, p[b.k_w], p[b.k_b]);
      auto v = ad::linear(h, p[b.v_w], p[b.v_b]);
      std::vector<ad::Var<T>> heads_out, heads_w;
      for (std::size_t head = 0; head < c.heads; ++head) {
        auto att = ad::attention(ad::slice_cols(q, head * hd, hd), ad::slice_cols(k, head * hd, hd),
                                 ad::slice_cols(v, head * hd, hd));
        heads_out.push_back(att.output);
        heads_w.push_back(att.weights);
      }
      auto merged = c.heads == 1 ? heads_out[0] : ad::concat_cols<T>(heads_out);
      x = ad::add(x, ad::linear(merged, p[b.proj_w], p[b.proj_b]));
      auto h2 = ad::layer_norm(x, p[b.norm2_g], p[b.norm2_b]);
      auto m = ad::linear(ad::gelu(ad::linear(h2, p[b.fc1_w], p[b.fc1_b])), p[b.fc2_w], p[b.fc2_b]);
      x = ad::add(x, m);
      out.attention.push_back(std::move(heads_w));
    } catch (const NumericalError& e) {
      throw NumericalError("vit layer " + std::to_string(layer) + ": " + e.what());
    }
  }

  try {
    const std::size_t t0 = ParamIndex::tail(c);
    x = ad::layer_norm(x, p[t0], p[t0 + 1]);
    out.embedding = ad::slice_rows(x, 0, 1);
    out.mean_embedding = ad::mean_rows(ad::slice_rows(x, 1, tokens));
    auto z = ad::gelu(ad::linear(out.embedding, p[t0 + 2], p[t0 + 3]));
    z = ad::gelu(ad::linear(z, p[t0 + 4], p[t0 + 5]));
    z = ad::l2_normalize_rows(ad::linear(z, p[t0 + 6], p[t0 + 7]));
    // prototypes are weight-normalized columns
    out.logits = ad::matmul(z, ad::l2_normalize_cols(p[t0 + 8]));
  } catch (const NumericalError& e) {
    throw NumericalError("vit head (layer " + std::to_string(c.depth) + "): " + e.what());
  }
  return out;
}

template <typename T>
struct ForwardOutput {
  Tensor<T> embedding;       ///< [dim]
  Tensor<T> mean_embedding;  ///< [dim]
  Tensor<T> logits;          ///< [proto_count]
  AttentionMaps<T> maps;
};

template <typename T>
ForwardOutput<T> forward(const VitParams<T>& params, const Tensor<T>& tile) {
  ad::Tape<T> tape;
  const auto vars = bind_params(tape, params, false);
  const auto f = forward_on_tape<T>(params.config, vars, tape.constant(tile));
  ForwardOutput<T> out;
  const std::size_t d = params.config.dim;
  out.embedding = f.embedding.value().reshaped({d});
  out.mean_embedding = f.mean_embedding.value().reshaped({d});
  out.logits = f.logits.value().reshaped({params.config.proto_count});
  for (const auto& layer : f.attention) {
    std::vector<Tensor<T>> heads;
    for (const auto& w : layer) heads.push_back(w.value());
    out.maps.push_back(std::move(heads));
  }
  return out;
}

/// Per-head CLS attention over patches, reshaped to the patch grid.
template <typename T>
struct AttentionOverlay {
  std::size_t layer = 0;
  std::size_t grid = 0;
  std::vector<Tensor<T>> weights;  ///< full (tokens+1)^2 matrices per head
  std::vector<Tensor<T>> grids;    ///< [grid, grid] per head
  std::vector<T> cls_self;         ///< CLS-to-CLS mass per head
};

template <typename T>
AttentionOverlay<T> attention_maps(const VitParams<T>& params, const Tensor<T>& tile, std::size_t layer) {
  if (layer >= params.config.depth) {
    throw ConfigError("attention layer " + std::to_string(layer) + " out of range (depth " +
                      std::to_string(params.config.depth) + ")");
  }
  auto f = forward(params, tile);
  AttentionOverlay<T> o;
  o.layer = layer;
  o.grid = tile.dim(1) / params.config.patch_size;
  for (auto& w : f.maps[layer]) {
    Tensor<T> g(Shape{o.grid, o.grid});
    for (std::size_t i = 0; i < o.grid * o.grid; ++i) g[i] = w.at(0, i + 1);
    o.cls_self.push_back(w.at(0, 0));
    o.grids.push_back(std::move(g));
    o.weights.push_back(std::move(w));
  }
  return o;
}

/// Plain-tensor single-head attention, softmax(Q K^T / sqrt(d_k)) V.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  ad::Tape<T> tape;
  auto r = ad::attention(tape.constant(q), tape.constant(k), tape.constant(v));
  return {r.output.value(), r.weights.value()};
}

}  // namespace geosdg::vit
