#include "geosdg/vit/checkpoint.hpp"

#include "geosdg/error.hpp"
#include "geosdg/io.hpp"

namespace geosdg::vit {

const Tensor<float>& Checkpoint::record(std::string_view name) const {
  for (const auto& r : records)
    if (r.name == name) return r.value;
  throw FormatError("checkpoint has no record '" + std::string(name) + "'");
}

std::uint64_t Checkpoint::scalar(std::string_view name) const {
  for (const auto& [k, v] : scalars)
    if (k == name) return v;
  throw FormatError("checkpoint has no scalar '" + std::string(name) + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  io::BinaryWriter w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(ckpt.kind));
  const auto& c = ckpt.config;
  for (std::uint32_t v : {c.image_size, c.bands, c.patch_size, c.depth, c.dim, c.heads, c.proto_count,
                          c.bottleneck_dim, c.mlp_ratio}) {
    w.put<std::uint32_t>(v);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.records.size()));
  for (const auto& r : ckpt.records) {
    w.short_string(r.name);
    if (r.value.rank() > UINT8_MAX) throw InvalidValue("checkpoint: rank too large for " + r.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.value.rank()));
    for (auto e : r.value.shape()) {
      if (e > UINT32_MAX) throw InvalidValue("checkpoint: extent too large for " + r.name);
      w.put<std::uint32_t>(static_cast<std::uint32_t>(e));
    }
    w.array(r.value.ptr(), r.value.size());
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.scalars.size()));
  for (const auto& [name, v] : ckpt.scalars) {
    w.short_string(name);
    w.put<std::uint64_t>(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what) {
  io::BinaryReader r(bytes, what);
  if (r.bytes(4) != std::string_view(kCheckpointMagic, 4)) throw FormatError(what + ": bad magic, expected \"GSDG\"");
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw FormatError(what + ": unknown checkpoint kind " + std::to_string(kind));
  ckpt.kind = static_cast<CheckpointKind>(kind);
  auto& c = ckpt.config;
  for (std::uint32_t* f : {&c.image_size, &c.bands, &c.patch_size, &c.depth, &c.dim, &c.heads, &c.proto_count,
                           &c.bottleneck_dim, &c.mlp_ratio}) {
    *f = r.get<std::uint32_t>();
  }
  try {
    validate(c);
  } catch (const ConfigError& e) {
    throw FormatError(what + ": " + e.what());
  }
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name = r.short_string();
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& e : shape) e = r.get<std::uint32_t>();
    const auto count = shape_size(shape);
    if (count * sizeof(float) > r.remaining()) {
      throw FormatError(what + ": truncated at byte offset " + std::to_string(r.offset()) + " in record " + t.name);
    }
    std::vector<float> data(count);
    r.array(data.data(), count);
    t.value = Tensor<float>(std::move(shape), std::move(data));
    ckpt.records.push_back(std::move(t));
  }
  const auto ns = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < ns; ++i) {
    auto name = r.short_string();
    ckpt.scalars.emplace_back(std::move(name), r.get<std::uint64_t>());
  }
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes at offset " + std::to_string(r.offset()));
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

void append_params(Checkpoint& ckpt, const VitParams<float>& params, std::string_view prefix) {
  for (std::size_t i = 0; i < params.count(); ++i) {
    ckpt.records.push_back({std::string(prefix) + params.names[i], params.tensors[i]});
  }
}

VitParams<float> extract_params(const Checkpoint& ckpt, std::string_view prefix) {
  VitParams<float> p;
  p.config = ckpt.config;
  for (const auto& spec : param_layout(ckpt.config)) {
    const auto& t = ckpt.record(std::string(prefix) + spec.name);
    if (t.shape() != spec.shape) {
      throw FormatError("checkpoint record " + std::string(prefix) + spec.name + " has shape " +
                        shape_str(t.shape()) + ", expected " + shape_str(spec.shape));
    }
    p.names.push_back(spec.name);
    p.tensors.push_back(t);
  }
  return p;
}

Checkpoint model_checkpoint(const VitParams<float>& params) {
  Checkpoint ckpt;
  ckpt.kind = CheckpointKind::model;
  ckpt.config = params.config;
  append_params(ckpt, params);
  return ckpt;
}

void save_params(const std::filesystem::path& path, const VitParams<float>& params) {
  write_checkpoint(path, model_checkpoint(params));
}

VitParams<float> load_params(const std::filesystem::path& path, std::string_view which) {
  const auto ckpt = read_checkpoint(path);
  if (ckpt.kind == CheckpointKind::model) return extract_params(ckpt);
  if (which != "teacher" && which != "student") {
    throw ConfigError("parameter set must be teacher or student, got '" + std::string(which) + "'");
  }
  return extract_params(ckpt, std::string(which) + "/");
}

}  // namespace geosdg::vit
