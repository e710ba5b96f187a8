#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "geosdg/ingest/tile.hpp"

namespace geosdg::ingest {

inline const std::vector<std::string> kManifestHeader = {"tile_id", "path",  "lat",   "lon",         "date",
                                                         "source",  "cloud_cover", "round", "location_id", "country"};

struct ManifestRecord {
  std::string tile_id;
  std::filesystem::path path;  ///< as written; resolved against Manifest::base_dir
  double lat = 0;
  double lon = 0;
  std::string date;
  Source source = Source::sentinel2;
  double cloud_cover = 0;
  int round = 0;
  std::string location_id;  ///< optional survey link, empty when absent
  std::string country;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRecord> records;

  std::filesystem::path resolve(const ManifestRecord& r) const {
    return r.path.is_absolute() ? r.path : base_dir / r.path;
  }
};

/// Parses a manifest; FormatError with row number on bad fields, InvalidValue
/// on duplicate tile ids. Paths are checked later, when tiles load.
Manifest read_manifest(const std::filesystem::path& path);
std::string format_manifest(const Manifest& m);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

/// Records with cloud_cover <= max_cc, in their original order.
Manifest filter_cloud(const Manifest& m, double max_cc = 10.0);

/// Image counts keyed by (source, round).
struct ManifestStats {
  std::map<std::pair<Source, int>, std::size_t> counts;
  std::size_t total = 0;

  std::size_t count(Source s, int round) const {
    auto it = counts.find({s, round});
    return it == counts.end() ? 0 : it->second;
  }
};

ManifestStats manifest_stats(const Manifest& m);
/// CSV `source,round,images`, one row per source x survey round (7, 8, 9).
std::string format_manifest_stats(const ManifestStats& s);

/// Loads every tile. All unreadable paths are collected and reported in one
/// IngestError.
std::vector<Tile> load_tiles(const Manifest& m);

}  // namespace geosdg::ingest
