#pragma once

// Tile file layout (little-endian):
//
//   "GTIL"          magic
//   u16 version     currently 1
//   u16 bands
//   u32 height, u32 width
//   u8  dtype       0 = float32
//   f64 lat, f64 lon
//   u8  source      0 = landsat8, 1 = sentinel2
//   u16 date length, date bytes (ISO-8601)
//   f32 cloud_cover percent
//   band-major raster, bands * height * width float32 values

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "geosdg/numerics/tensor.hpp"

namespace geosdg::ingest {

inline constexpr char kTileMagic[4] = {'G', 'T', 'I', 'L'};
inline constexpr std::uint16_t kTileVersion = 1;

enum class Source : std::uint8_t { landsat8 = 0, sentinel2 = 1 };

std::string_view source_name(Source s);
Source parse_source(std::string_view name);

struct Tile {
  std::string tile_id;
  Tensor<float> raster;  ///< [bands, H, W]
  double lat = 0;
  double lon = 0;
  std::string date;
  Source source = Source::sentinel2;
  float cloud_cover = 0;

  std::size_t bands() const { return raster.dim(0); }
  std::size_t height() const { return raster.dim(1); }
  std::size_t width() const { return raster.dim(2); }
};

/// Checks raster rank and finiteness, coordinate and cloud ranges.
void validate_tile(const Tile& t);

std::size_t tile_header_size(std::size_t date_length);

std::string encode_tile(const Tile& t);
/// The tile id is not stored in the file; callers supply it.
Tile decode_tile(std::string_view bytes, const std::string& what, std::string tile_id = {});

void write_tile(const std::filesystem::path& path, const Tile& t);
/// Tile id defaults to the file stem.
Tile load_tile(const std::filesystem::path& path, std::string tile_id = {});

}  // namespace geosdg::ingest
