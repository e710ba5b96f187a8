#pragma once

// Checkpoint file layout (all little-endian):
//
//   "GSDG"                      magic
//   u16 version                 currently 1
//   u8  kind                    0 = model parameters, 1 = training state
//   u32 x 9                     ModelConfig: image_size, bands, patch_size,
//                               depth, dim, heads, proto_count,
//                               bottleneck_dim, mlp_ratio
//   u32 record count
//   records, each:              u16 name length, name bytes, u8 rank,
//                               u32 extent per axis, raw f32 values
//   u32 scalar count
//   scalars, each:              u16 name length, name bytes, u64 value
//
// Model checkpoints hold the parameters in layout order under their plain
// names. Training-state checkpoints prefix them with "student/", "teacher/",
// "adam_m/", "adam_v/" (in that order), followed by a "center" record.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geosdg/numerics/tensor.hpp"
#include "geosdg/vit/config.hpp"
#include "geosdg/vit/params.hpp"

namespace geosdg::vit {

inline constexpr char kCheckpointMagic[4] = {'G', 'S', 'D', 'G'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint8_t { model = 0, training_state = 1 };

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::model;
  ModelConfig config;
  std::vector<NamedTensor> records;
  std::vector<std::pair<std::string, std::uint64_t>> scalars;

  const Tensor<float>& record(std::string_view name) const;
  std::uint64_t scalar(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what = "checkpoint");

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Appends params to `ckpt` under `prefix`.
void append_params(Checkpoint& ckpt, const VitParams<float>& params, std::string_view prefix = "");

/// Rebuilds params from records named prefix + layout name, validating shapes.
VitParams<float> extract_params(const Checkpoint& ckpt, std::string_view prefix = "");

Checkpoint model_checkpoint(const VitParams<float>& params);

void save_params(const std::filesystem::path& path, const VitParams<float>& params);

/// Model checkpoints return their parameters; training-state checkpoints
/// return the `which` set ("teacher" or "student").
VitParams<float> load_params(const std::filesystem::path& path, std::string_view which = "teacher");

}  // namespace geosdg::vit
