#include "geosdg/ingest/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include "geosdg/error.hpp"
#include "geosdg/io.hpp"
#include "geosdg/numerics/rng.hpp"

namespace geosdg::ingest {

namespace {

struct Country {
  const char* code;
  double lat, lon;
};

constexpr Country kCountries[] = {{"XAA", 6.0, 8.0}, {"XAB", -4.0, 24.0}, {"XAC", 11.0, 36.0}};

// Band-major raster of one tile for the given class.
Tensor<float> make_raster(const SynthOptions& o, bool served, Rng& rng) {
  const std::size_t n = o.image_size, bands = o.bands;
  std::vector<double> pattern(n * n, 0.0);
  if (served) {
    const std::size_t px = 6 + rng.below(5), py = 6 + rng.below(5);
    const std::size_t ox = rng.below(px), oy = rng.below(py);
    const std::size_t wx = rng.bernoulli(0.3) ? 2 : 1, wy = rng.bernoulli(0.3) ? 2 : 1;
    // one roof brightness per block, keyed by block coordinates
    std::map<std::pair<std::size_t, std::size_t>, double> roofs;
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const std::size_t cx = (x + px - ox) % px, cy = (y + py - oy) % py;
        if (cx < wx || cy < wy) {
          pattern[y * n + x] = o.road_contrast;
        } else {
          const auto key = std::make_pair((x + px - ox) / px, (y + py - oy) / py);
          auto it = roofs.find(key);
          if (it == roofs.end()) it = roofs.emplace(key, rng.normal(0.0, o.block_contrast)).first;
          pattern[y * n + x] = it->second;
        }
      }
    }
  } else {
    for (int k = 0; k < 3; ++k) {
      const double wavelength = rng.uniform(20.0, 60.0);
      const double angle = rng.uniform(0.0, std::numbers::pi);
      const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
      const double fx = std::cos(angle) / wavelength, fy = std::sin(angle) / wavelength;
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x)
          pattern[y * n + x] += o.field_amplitude *
                                std::sin(2 * std::numbers::pi * (fx * static_cast<double>(x) + fy * static_cast<double>(y)) + phase);
    }
  }
  Tensor<float> r(Shape{bands, n, n});
  for (std::size_t b = 0; b < bands; ++b) {
    const double base = 0.3 + rng.normal(0.0, o.color_jitter);
    const double gain = rng.uniform(1.0 - o.gain_jitter, 1.0 + o.gain_jitter);
    float* dst = r.ptr() + b * n * n;
    for (std::size_t i = 0; i < n * n; ++i) {
      dst[i] = static_cast<float>(gain * (base + pattern[i]) + rng.normal(0.0, o.noise_std));
    }
  }
  return r;
}

std::string id_with(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

}  // namespace

double high_frequency_energy(const Tensor<float>& raster) {
  if (raster.rank() != 3) throw ShapeError("high_frequency_energy: raster must be [bands,H,W]");
  const std::size_t bands = raster.dim(0), h = raster.dim(1), w = raster.dim(2);
  double e = 0;
  for (std::size_t b = 0; b < bands; ++b) {
    const float* p = raster.ptr() + b * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        if (x + 1 < w) e += std::pow(double(p[y * w + x + 1]) - p[y * w + x], 2);
        if (y + 1 < h) e += std::pow(double(p[(y + 1) * w + x]) - p[y * w + x], 2);
      }
  }
  return e;
}

SynthDataset synth_dataset(const SynthOptions& o) {
  if (o.n_tiles < 2) throw ConfigError("synth: need at least 2 tiles");
  if (!(o.balance >= 0 && o.balance <= 1)) throw ConfigError("synth: balance must lie in [0,1]");
  if (!(o.label_noise >= 0 && o.label_noise <= 1)) throw ConfigError("synth: label noise must lie in [0,1]");
  if (o.tiles_per_location == 0) throw ConfigError("synth: tiles per location must be positive");
  if (o.image_size == 0 || o.bands == 0) throw ConfigError("synth: image size and bands must be positive");

  const std::size_t n_loc = (o.n_tiles + o.tiles_per_location - 1) / o.tiles_per_location;
  const auto served_count = static_cast<std::size_t>(std::llround(o.balance * static_cast<double>(n_loc)));
  std::vector<int> loc_class(n_loc, 0);
  std::fill(loc_class.begin(), loc_class.begin() + static_cast<std::ptrdiff_t>(served_count), 1);
  Rng order(derive_seed(o.seed, {0x5eed, 0}));
  order.shuffle(loc_class.begin(), loc_class.end());

  SynthDataset ds;
  const int width = n_loc < 10000 ? 4 : 8;
  std::map<std::string, std::pair<double, double>> truth;  // country -> (pop, pop*piped)
  std::map<std::string, std::pair<double, double>> truth_sew;
  for (std::size_t i = 0; i < n_loc; ++i) {
    Rng rng(derive_seed(o.seed, {0x10c, i}));
    const auto& c = kCountries[i % 3];
    SurveyRecord s;
    s.location_id = id_with("L", i, width);
    s.lat = c.lat + rng.uniform(-1.5, 1.5);
    s.lon = c.lon + rng.uniform(-1.5, 1.5);
    s.round = 7 + static_cast<int>(rng.below(3));
    const bool served = loc_class[i] == 1;
    s.urban = served ? rng.bernoulli(0.8) : rng.bernoulli(0.15);
    s.piped_water = rng.bernoulli(o.label_noise) ? !served : served;
    s.sewage = rng.bernoulli(o.label_noise) ? !served : served;
    s.country = c.code;
    // a few population cells around the location; served places are denser
    const int cells = 3;
    for (int k = 0; k < cells; ++k) {
      aggregate::PopulationCell cell;
      cell.lat = s.lat + rng.uniform(-0.015, 0.015);
      cell.lon = s.lon + rng.uniform(-0.015, 0.015);
      cell.population = std::round(served ? rng.uniform(800, 3000) : rng.uniform(100, 900));
      cell.country = c.code;
      truth[c.code].first += cell.population;
      truth[c.code].second += cell.population * (s.piped_water ? 1 : 0);
      truth_sew[c.code].first += cell.population;
      truth_sew[c.code].second += cell.population * (s.sewage ? 1 : 0);
      ds.population.push_back(cell);
    }
    // remote population with no nearby location, left unassigned by design
    if (i % 10 == 9) {
      ds.population.push_back({c.lat + 3.0 + rng.uniform(0, 0.5), c.lon + 3.0 + rng.uniform(0, 0.5),
                               std::round(rng.uniform(50, 300)), c.code});
    }
    ds.survey.push_back(s);

    static constexpr int kYear[] = {2017, 2020, 2022};
    for (std::size_t j = 0; j < o.tiles_per_location; ++j) {
      const std::size_t t_idx = i * o.tiles_per_location + j;
      if (t_idx >= o.n_tiles) break;
      Rng trng(derive_seed(o.seed, {0x711e, t_idx}));
      Tile t;
      t.tile_id = id_with("T", t_idx, width + 1);
      t.raster = make_raster(o, served, trng);
      t.lat = s.lat;
      t.lon = s.lon;
      char date[16];
      std::snprintf(date, sizeof date, "%d-%02zu-15", kYear[s.round - 7], 1 + (j % 12));
      t.date = date;
      t.source = trng.bernoulli(0.3) ? Source::landsat8 : Source::sentinel2;
      t.cloud_cover = static_cast<float>(trng.bernoulli(o.cloudy_fraction) ? trng.uniform(10.5, 60.0)
                                                                             : trng.uniform(0.0, 10.0));
      t.cloud_cover = std::round(t.cloud_cover * 10.0f) / 10.0f;

      ManifestRecord r;
      r.tile_id = t.tile_id;
      r.path = std::filesystem::path("tiles") / (t.tile_id + ".gtil");
      r.lat = t.lat;
      r.lon = t.lon;
      r.date = t.date;
      r.source = t.source;
      r.cloud_cover = t.cloud_cover;
      r.round = s.round;
      r.location_id = s.location_id;
      r.country = s.country;
      ds.manifest.records.push_back(std::move(r));
      ds.tiles.push_back(std::move(t));
      ds.tile_class.push_back(served ? 1 : 0);
    }
  }

  // official statistics: population-weighted truth with a small reporting error
  Rng orng(derive_seed(o.seed, {0x0ff1}));
  for (const auto& c : kCountries) {
    aggregate::OfficialStat st;
    st.country = c.code;
    st.year = 2022;
    auto pct = [&](const std::pair<double, double>& t) -> std::optional<double> {
      if (t.first <= 0) return std::nullopt;
      const double v = 100.0 * t.second / t.first + orng.normal(0.0, 2.0);
      return std::round(std::clamp(v, 0.0, 100.0) * 100.0) / 100.0;
    };
    st.piped_pct = pct(truth[c.code]);
    st.sewage_pct = pct(truth_sew[c.code]);
    ds.official.push_back(st);
  }
  return ds;
}

void write_synth_dataset(const std::filesystem::path& dir, const SynthDataset& ds) {
  std::filesystem::create_directories(dir / "tiles");
  for (std::size_t i = 0; i < ds.tiles.size(); ++i) write_tile(dir / ds.manifest.records[i].path, ds.tiles[i]);
  Manifest m = ds.manifest;
  m.base_dir = dir;
  write_manifest(dir / "manifest.csv", m);
  io::write_file_atomic(dir / "survey.csv", format_survey(ds.survey));
  io::write_file_atomic(dir / "population.csv", aggregate::format_population(ds.population));
  io::write_file_atomic(dir / "official.csv", aggregate::format_official(ds.official));
}

}  // namespace geosdg::ingest
