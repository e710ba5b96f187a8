#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geosdg/aggregate/aggregate.hpp"
#include "geosdg/ingest/manifest.hpp"
#include "geosdg/ingest/survey.hpp"
#include "geosdg/ingest/tile.hpp"

namespace geosdg::ingest {

struct SynthOptions {
  std::size_t n_tiles = 400;
  double balance = 0.5;      ///< fraction of "served" locations
  double label_noise = 0.0;  ///< probability of flipping each task label
  std::uint64_t seed = 0;
  std::size_t image_size = 32;
  std::size_t bands = 3;
  std::size_t tiles_per_location = 2;
  double cloudy_fraction = 0.1;  ///< tiles given cloud cover above 10%

  // texture controls
  double road_contrast = 0.30;
  double block_contrast = 0.06;
  double field_amplitude = 0.10;
  double color_jitter = 0.02;  ///< std of per-tile band offsets, shared by both classes
  double gain_jitter = 0.05;   ///< half-width of per-tile band gains
  double noise_std = 0.02;
};

struct SynthDataset {
  std::vector<Tile> tiles;
  std::vector<int> tile_class;  ///< 1 = served, per tile
  Manifest manifest;            ///< paths relative to the output directory
  std::vector<SurveyRecord> survey;
  std::vector<aggregate::PopulationCell> population;
  std::vector<aggregate::OfficialStat> official;
};

/// Procedural tiles: served locations carry a road grid with blocky texture,
/// unserved ones a smooth low-frequency field. Deterministic in options.
SynthDataset synth_dataset(const SynthOptions& opt);

/// Writes tiles/<id>.gtil, manifest.csv, survey.csv, population.csv and
/// official.csv under `dir`.
void write_synth_dataset(const std::filesystem::path& dir, const SynthDataset& ds);

/// Mean sum of squared first differences (both axes, all bands) per tile.
double high_frequency_energy(const Tensor<float>& raster);

}  // namespace geosdg::ingest
