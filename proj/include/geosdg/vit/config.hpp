#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "geosdg/error.hpp"

namespace geosdg::vit {

struct ModelConfig {
  std::uint32_t image_size = 32;
  std::uint32_t bands = 3;
  std::uint32_t patch_size = 8;
  std::uint32_t depth = 4;
  std::uint32_t dim = 64;
  std::uint32_t heads = 4;
  /// Output dimension N of the projection head (prototype count).
  std::uint32_t proto_count = 256;
  /// Width of the L2-normalized layer feeding the prototypes.
  std::uint32_t bottleneck_dim = 64;
  std::uint32_t mlp_ratio = 4;

  std::uint32_t head_dim() const { return dim / heads; }
  std::uint32_t grid() const { return image_size / patch_size; }
  std::uint32_t tokens() const { return grid() * grid(); }
  std::uint32_t patch_len() const { return bands * patch_size * patch_size; }
  std::uint32_t head_hidden() const { return 2 * dim; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// ViT-base: 12 layers, width 768, 12 heads, patch 8.
inline ModelConfig base_preset() {
  return ModelConfig{.image_size = 224,
                     .bands = 3,
                     .patch_size = 8,
                     .depth = 12,
                     .dim = 768,
                     .heads = 12,
                     .proto_count = 4096,
                     .bottleneck_dim = 256,
                     .mlp_ratio = 4};
}

inline ModelConfig desk_preset() { return ModelConfig{}; }

inline ModelConfig preset(const std::string& name) {
  if (name == "base") return base_preset();
  if (name == "desk") return desk_preset();
  throw ConfigError("unknown model preset '" + name + "' (expected base or desk)");
}

inline void validate(const ModelConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (c.image_size == 0 || c.bands == 0 || c.patch_size == 0 || c.depth == 0 || c.dim == 0 || c.heads == 0 ||
      c.proto_count == 0 || c.bottleneck_dim == 0 || c.mlp_ratio == 0) {
    fail("all sizes must be positive");
  }
  if (c.dim % c.heads != 0) fail("dim " + std::to_string(c.dim) + " not divisible by heads " + std::to_string(c.heads));
  if (c.image_size % c.patch_size != 0) {
    fail("image_size " + std::to_string(c.image_size) + " not divisible by patch_size " + std::to_string(c.patch_size));
  }
}

/// Number of scalar parameters, in closed form.
inline std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.dim, h = c.head_hidden(), b = c.bottleneck_dim, m = c.mlp_ratio * d;
  const std::size_t embed = c.patch_len() * d + d + d + (c.tokens() + 1) * d;
  const std::size_t block = 4 * d + 4 * (d * d + d) + (d * m + m) + (m * d + d);
  const std::size_t head = (d * h + h) + (h * h + h) + (h * b + b) + b * c.proto_count;
  return embed + c.depth * block + 2 * d + head;
}

}  // namespace geosdg::vit
