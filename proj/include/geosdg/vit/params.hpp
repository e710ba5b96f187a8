#pragma once

// Parameter storage for the encoder and its projection head.
//
// Tensors live in one fixed order (the checkpoint order):
//   patch_embed.weight [patch_len, dim], patch_embed.bias [dim],
//   cls_token [1, dim], pos_embed [tokens + 1, dim],
//   per block i: blocks.i.{norm1.gain, norm1.bias, attn.q.weight, attn.q.bias,
//     attn.k.weight, attn.k.bias, attn.v.weight, attn.v.bias, attn.proj.weight,
//     attn.proj.bias, norm2.gain, norm2.bias, mlp.fc1.weight, mlp.fc1.bias,
//     mlp.fc2.weight, mlp.fc2.bias},
//   norm.gain, norm.bias,
//   head.fc1.{weight,bias}, head.fc2.{weight,bias}, head.fc3.{weight,bias},
//   head.last.weight [bottleneck, proto_count].
// Weight matrices are stored [in, out] so a layer computes x W + b.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geosdg/error.hpp"
#include "geosdg/numerics/rng.hpp"
#include "geosdg/numerics/tensor.hpp"
#include "geosdg/vit/config.hpp"

namespace geosdg::vit {

struct ParamSpec {
  std::string name;
  Shape shape;
};

inline constexpr std::size_t kEmbedTensors = 4;
inline constexpr std::size_t kBlockTensors = 16;
inline constexpr std::size_t kTailTensors = 9;

inline std::vector<ParamSpec> param_layout(const ModelConfig& c) {
  validate(c);
  const std::size_t d = c.dim, h = c.head_hidden(), b = c.bottleneck_dim, m = c.mlp_ratio * d;
  std::vector<ParamSpec> out;
  out.push_back({"patch_embed.weight", {c.patch_len(), d}});
  out.push_back({"patch_embed.bias", {d}});
  out.push_back({"cls_token", {1, d}});
  out.push_back({"pos_embed", {c.tokens() + std::size_t{1}, d}});
  for (std::uint32_t i = 0; i < c.depth; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    out.push_back({p + "norm1.gain", {d}});
    out.push_back({p + "norm1.bias", {d}});
    for (const char* proj : {"q", "k", "v", "proj"}) {
      out.push_back({p + "attn." + proj + ".weight", {d, d}});
      out.push_back({p + "attn." + proj + ".bias", {d}});
    }
    out.push_back({p + "norm2.gain", {d}});
    out.push_back({p + "norm2.bias", {d}});
    out.push_back({p + "mlp.fc1.weight", {d, m}});
    out.push_back({p + "mlp.fc1.bias", {m}});
    out.push_back({p + "mlp.fc2.weight", {m, d}});
    out.push_back({p + "mlp.fc2.bias", {d}});
  }
  out.push_back({"norm.gain", {d}});
  out.push_back({"norm.bias", {d}});
  out.push_back({"head.fc1.weight", {d, h}});
  out.push_back({"head.fc1.bias", {h}});
  out.push_back({"head.fc2.weight", {h, h}});
  out.push_back({"head.fc2.bias", {h}});
  out.push_back({"head.fc3.weight", {h, b}});
  out.push_back({"head.fc3.bias", {b}});
  out.push_back({"head.last.weight", {b, c.proto_count}});
  return out;
}

/// Positions of the named tensors within the fixed order.
struct ParamIndex {
  static constexpr std::size_t patch_w = 0, patch_b = 1, cls = 2, pos = 3;

  struct Block {
    std::size_t norm1_g, norm1_b, q_w, q_b, k_w, k_b, v_w, v_b, proj_w, proj_b, norm2_g, norm2_b, fc1_w, fc1_b,
        fc2_w, fc2_b;
  };

  static Block block(std::size_t layer) {
    const std::size_t o = kEmbedTensors + layer * kBlockTensors;
    return {o, o + 1, o + 2, o + 3, o + 4, o + 5, o + 6, o + 7, o + 8, o + 9, o + 10, o + 11, o + 12, o + 13, o + 14, o + 15};
  }

  static std::size_t tail(const ModelConfig& c) { return kEmbedTensors + c.depth * kBlockTensors; }
};

template <typename T>
struct VitParams {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  std::size_t count() const { return tensors.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw InvalidValue("no parameter named '" + std::string(name) + "'");
  }

  Tensor<T>& operator[](std::string_view name) { return tensors[index_of(name)]; }
  const Tensor<T>& operator[](std::string_view name) const { return tensors[index_of(name)]; }

  template <typename U>
  VitParams<U> cast() const {
    VitParams<U> out{config, names, {}};
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }

  /// Same config, names and shapes.
  bool same_structure(const VitParams& other) const {
    if (!(config == other.config) || names != other.names || tensors.size() != other.tensors.size()) return false;
    for (std::size_t i = 0; i < tensors.size(); ++i)
      if (tensors[i].shape() != other.tensors[i].shape()) return false;
    return true;
  }

  friend bool operator==(const VitParams& a, const VitParams& b) {
    return a.config == b.config && a.names == b.names && a.tensors == b.tensors;
  }
};

inline bool is_gain(std::string_view name) { return name.ends_with(".gain"); }

/// Weights (rank 2, including cls/pos embeddings and prototypes) from a
/// normal truncated at two standard deviations, std 0.02; biases zero; norm
/// gains one. Deterministic in (config, seed).
template <typename T = float>
VitParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  const auto layout = param_layout(config);
  VitParams<T> p;
  p.config = config;
  Rng rng(derive_seed(seed, {0x7669u}));
  for (const auto& spec : layout) {
    Tensor<T> t(spec.shape);
    if (spec.shape.size() == 2) {
      for (auto& v : t.data()) v = static_cast<T>(rng.truncated_normal(0.02));
    } else if (is_gain(spec.name)) {
      t.fill(T(1));
    }
    p.names.push_back(spec.name);
    p.tensors.push_back(std::move(t));
  }
  return p;
}

}  // namespace geosdg::vit
