#include "geosdg/ingest/manifest.hpp"

#include <set>

#include "geosdg/csv.hpp"
#include "geosdg/error.hpp"
#include "geosdg/io.hpp"

namespace geosdg::ingest {

Manifest read_manifest(const std::filesystem::path& path) {
  const auto t = csv::read(path, kManifestHeader);
  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> seen;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    ManifestRecord r;
    r.tile_id = row[0];
    if (r.tile_id.empty()) throw FormatError(path.string() + " row " + std::to_string(t.lines[i]) + ": empty tile_id");
    if (!seen.insert(r.tile_id).second) {
      throw InvalidValue(path.string() + " row " + std::to_string(t.lines[i]) + ": duplicate tile_id " + r.tile_id);
    }
    r.path = row[1];
    r.lat = csv::to_double(t, i, 2);
    r.lon = csv::to_double(t, i, 3);
    r.date = row[4];
    try {
      r.source = parse_source(row[5]);
    } catch (const FormatError& e) {
      throw FormatError(path.string() + " row " + std::to_string(t.lines[i]) + ": " + e.what());
    }
    r.cloud_cover = csv::to_double(t, i, 6);
    r.round = static_cast<int>(csv::to_int(t, i, 7));
    r.location_id = row[8];
    r.country = row[9];
    if (r.lat < -90 || r.lat > 90 || r.lon < -180 || r.lon > 180 || r.cloud_cover < 0 || r.cloud_cover > 100) {
      throw FormatError(path.string() + " row " + std::to_string(t.lines[i]) + ": value out of range");
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

std::string format_manifest(const Manifest& m) {
  std::string out = csv::join(kManifestHeader) + "\n";
  for (const auto& r : m.records) {
    out += csv::join({r.tile_id, r.path.generic_string(), csv::shortest(r.lat), csv::shortest(r.lon), r.date,
                      std::string(source_name(r.source)), csv::shortest(r.cloud_cover), std::to_string(r.round),
                      r.location_id, r.country});
    out += '\n';
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  io::write_file_atomic(path, format_manifest(m));
}

Manifest filter_cloud(const Manifest& m, double max_cc) {
  if (!(max_cc >= 0 && max_cc <= 100)) throw ConfigError("cloud threshold must lie in [0,100]");
  Manifest out;
  out.base_dir = m.base_dir;
  for (const auto& r : m.records)
    if (r.cloud_cover <= max_cc) out.records.push_back(r);
  return out;
}

ManifestStats manifest_stats(const Manifest& m) {
  ManifestStats s;
  for (const auto& r : m.records) ++s.counts[{r.source, r.round}];
  s.total = m.records.size();
  return s;
}

std::string format_manifest_stats(const ManifestStats& s) {
  std::set<std::pair<Source, int>> keys;
  for (Source src : {Source::landsat8, Source::sentinel2})
    for (int round : {7, 8, 9}) keys.insert({src, round});
  for (const auto& [k, n] : s.counts) keys.insert(k);
  std::string out = "source,round,images\n";
  for (const auto& [src, round] : keys) {
    out += std::string(source_name(src)) + "," + std::to_string(round) + "," + std::to_string(s.count(src, round)) +
           "\n";
  }
  return out;
}

std::vector<Tile> load_tiles(const Manifest& m) {
  std::vector<Tile> tiles;
  std::vector<std::string> bad;
  tiles.reserve(m.records.size());
  for (const auto& r : m.records) {
    try {
      tiles.push_back(load_tile(m.resolve(r), r.tile_id));
    } catch (const Error& e) {
      bad.push_back(e.what());
    }
  }
  if (!bad.empty()) {
    std::string msg = std::to_string(bad.size()) + " unreadable tile(s):";
    for (const auto& b : bad) msg += "\n  " + b;
    throw IngestError(msg);
  }
  return tiles;
}

}  // namespace geosdg::ingest
