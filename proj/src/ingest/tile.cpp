#include "geosdg/ingest/tile.hpp"

#include <cmath>

#include "geosdg/error.hpp"
#include "geosdg/io.hpp"

namespace geosdg::ingest {

std::string_view source_name(Source s) { return s == Source::landsat8 ? "landsat8" : "sentinel2"; }

Source parse_source(std::string_view name) {
  if (name == "landsat8") return Source::landsat8;
  if (name == "sentinel2") return Source::sentinel2;
  throw FormatError("unknown source '" + std::string(name) + "', expected landsat8 or sentinel2");
}

void validate_tile(const Tile& t) {
  if (t.raster.rank() != 3) throw ShapeError("tile " + t.tile_id + ": raster must be [bands,H,W], got " +
                                             shape_str(t.raster.shape()));
  if (!t.raster.all_finite()) throw InvalidValue("tile " + t.tile_id + ": non-finite raster value");
  if (!(t.lat >= -90 && t.lat <= 90) || !(t.lon >= -180 && t.lon <= 180)) {
    throw InvalidValue("tile " + t.tile_id + ": coordinates out of range");
  }
  if (!(t.cloud_cover >= 0 && t.cloud_cover <= 100)) {
    throw InvalidValue("tile " + t.tile_id + ": cloud_cover outside [0,100]");
  }
}

std::size_t tile_header_size(std::size_t date_length) {
  // magic, version, bands, H, W, dtype, lat, lon, source, date len, date, cloud
  return 4 + 2 + 2 + 4 + 4 + 1 + 8 + 8 + 1 + 2 + date_length + 4;
}

std::string encode_tile(const Tile& t) {
  validate_tile(t);
  if (t.bands() > UINT16_MAX || t.height() > UINT32_MAX || t.width() > UINT32_MAX) {
    throw InvalidValue("tile " + t.tile_id + ": extents too large");
  }
  io::BinaryWriter w;
  w.bytes(std::string_view(kTileMagic, 4));
  w.put<std::uint16_t>(kTileVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(t.bands()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.height()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.width()));
  w.put<std::uint8_t>(0);
  w.put<double>(t.lat);
  w.put<double>(t.lon);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t.source));
  w.short_string(t.date);
  w.put<float>(t.cloud_cover);
  w.array(t.raster.ptr(), t.raster.size());
  return w.take();
}

Tile decode_tile(std::string_view bytes, const std::string& what, std::string tile_id) {
  io::BinaryReader r(bytes, what);
  if (r.bytes(4) != std::string_view(kTileMagic, 4)) throw FormatError(what + ": bad magic, expected \"GTIL\"");
  const auto version = r.get<std::uint16_t>();
  if (version != kTileVersion) throw FormatError(what + ": unsupported tile version " + std::to_string(version));
  Tile t;
  t.tile_id = std::move(tile_id);
  const std::size_t bands = r.get<std::uint16_t>();
  const std::size_t h = r.get<std::uint32_t>();
  const std::size_t w = r.get<std::uint32_t>();
  const auto dtype = r.get<std::uint8_t>();
  if (dtype != 0) throw FormatError(what + ": unsupported dtype code " + std::to_string(dtype));
  t.lat = r.get<double>();
  t.lon = r.get<double>();
  const auto source = r.get<std::uint8_t>();
  if (source > 1) throw FormatError(what + ": unknown source code " + std::to_string(source));
  t.source = static_cast<Source>(source);
  t.date = r.short_string();
  t.cloud_cover = r.get<float>();
  const std::size_t n = bands * h * w;
  if (r.remaining() < n * sizeof(float)) {
    throw FormatError(what + ": truncated at byte offset " + std::to_string(r.offset() + r.remaining()) +
                      ", raster needs " + std::to_string(n * sizeof(float)) + " bytes");
  }
  std::vector<float> data(n);
  r.array(data.data(), n);
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes at offset " + std::to_string(r.offset()));
  t.raster = Tensor<float>(Shape{bands, h, w}, std::move(data));
  try {
    validate_tile(t);
  } catch (const Error& e) {
    throw FormatError(what + ": " + e.what());
  }
  return t;
}

void write_tile(const std::filesystem::path& path, const Tile& t) { io::write_file_atomic(path, encode_tile(t)); }

Tile load_tile(const std::filesystem::path& path, std::string tile_id) {
  if (tile_id.empty()) tile_id = path.stem().string();
  return decode_tile(io::read_file(path), path.string(), std::move(tile_id));
}

}  // namespace geosdg::ingest
