#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geosdg/ingest/survey.hpp"

namespace geosdg::aggregate {

using ingest::Task;

// ---------------------------------------------------------------------------
// inputs

inline const std::vector<std::string> kPopulationHeader = {"lat", "lon", "population", "country"};
inline const std::vector<std::string> kOfficialHeader = {"country", "year", "piped_pct", "sewage_pct"};

struct PopulationCell {
  double lat = 0;
  double lon = 0;
  double population = 0;
  std::string country;
};

std::vector<PopulationCell> read_population(const std::filesystem::path& path);
std::string format_population(const std::vector<PopulationCell>& cells);
/// Summed population per country.
std::map<std::string, double> population_by_country(const std::vector<PopulationCell>& cells);

struct OfficialStat {
  std::string country;
  int year = 0;
  std::optional<double> piped_pct;
  std::optional<double> sewage_pct;

  std::optional<double> pct(Task t) const { return t == Task::piped_water ? piped_pct : sewage_pct; }
};

std::vector<OfficialStat> read_official(const std::filesystem::path& path);
std::string format_official(const std::vector<OfficialStat>& stats);

// ---------------------------------------------------------------------------
// per-location fusion

struct Fused {
  double score = 0;
  int label = 0;
};

/// Mean of binary tile predictions; label 1 iff the mean exceeds 0.5.
Fused fuse_predictions(std::span<const int> tile_predictions);

inline const std::vector<std::string> kLocationHeader = {"location_id", "task",    "lat",   "lon",
                                                         "country",     "n_tiles", "score", "label"};

struct LocationLabel {
  std::string location_id;
  Task task = Task::piped_water;
  double lat = 0;
  double lon = 0;
  std::string country;
  std::size_t n_tiles = 0;
  double score = 0;
  int label = 0;
};

std::vector<LocationLabel> read_locations(const std::filesystem::path& path);
std::string format_locations(const std::vector<LocationLabel>& locs);

// ---------------------------------------------------------------------------
// national estimates

inline const std::vector<std::string> kEstimateHeader = {"country", "task", "access_fraction", "population_covered",
                                                         "n_locations"};

struct CountryEstimate {
  std::string country;
  Task task = Task::piped_water;
  double access_fraction = 0;
  double population_covered = 0;
  std::size_t n_locations = 0;
};

struct CoverageRow {
  std::string country;
  double assigned_population = 0;
  double unassigned_population = 0;
  std::size_t unassigned_cells = 0;
};

struct AccessResult {
  std::vector<CountryEstimate> estimates;  ///< sorted by country
  std::vector<CoverageRow> coverage;       ///< sorted by country
  std::vector<std::string> diagnostics;    ///< countries omitted and why
};

/// Each cell takes the label of the nearest location (haversine, ties by
/// location_id) within radius_m. Cells with none are excluded and counted.
/// Only locations whose task matches are used.
AccessResult population_weighted_access(const std::vector<LocationLabel>& locations,
                                        const std::vector<PopulationCell>& cells, Task task,
                                        double radius_m = 5000.0);

std::vector<CountryEstimate> read_estimates(const std::filesystem::path& path);
/// access_fraction with four decimals, population as an integer count.
std::string format_estimates(const std::vector<CountryEstimate>& est);
std::string format_coverage(const std::vector<CoverageRow>& rows);

// ---------------------------------------------------------------------------
// urban / rural stratification

struct UrbanRuralRow {
  std::string country;
  int round = 0;
  Task task = Task::piped_water;
  std::size_t urban_n = 0, urban_pos = 0;
  std::size_t rural_n = 0, rural_pos = 0;

  std::optional<double> urban_pct() const;
  std::optional<double> rural_pct() const;
};

/// One row per (country, round, task), sorted in that order.
std::vector<UrbanRuralRow> urban_rural_rates(const std::vector<ingest::SurveyRecord>& survey);
/// CSV `country,round,task,urban_pct,rural_pct,urban_n,rural_n`; empty cells blank.
std::string format_urban_rural(const std::vector<UrbanRuralRow>& rows);

// ---------------------------------------------------------------------------
// validation against official statistics

struct Fit {
  std::size_t n = 0;
  double r2 = 0;
  double slope = 0;
  double intercept = 0;
};

/// Least squares of official on model. With weights, every sum is
/// weight-scaled. Fewer than two pairs, or zero variance in either
/// coordinate, is a DegenerateFit.
Fit r_squared(std::span<const double> model, std::span<const double> official,
              std::span<const double> weights = {});
/// Squared Pearson correlation.
double pearson_r2(std::span<const double> x, std::span<const double> y);

inline constexpr double kPublishedR2Piped = 0.95;
inline constexpr double kPublishedR2Sewage = 0.85;

struct ValidationPair {
  std::string country;
  double model_pct = 0;
  double official_pct = 0;
  double population = 0;
};

struct ValidationReport {
  Task task = Task::piped_water;
  std::vector<ValidationPair> pairs;  ///< sorted by country
  std::size_t n_dropped = 0;          ///< countries missing one side
  Fit fit;
  std::optional<Fit> weighted;  ///< population-weighted, when every pair has population
  double pearson_r2 = 0;
  double published_r2 = 0;
};

/// Pairs estimates with official values of the same task by country. Model
/// fractions become percentages. Population per country comes from
/// `population` when given, else from the estimates' population_covered.
ValidationReport validate(const std::vector<CountryEstimate>& estimates, const std::vector<OfficialStat>& official,
                          Task task, const std::map<std::string, double>* population = nullptr);

inline const std::vector<std::string> kValidationHeader = {
    "task",         "n_pairs",        "n_dropped",          "r2",         "slope",       "intercept",
    "weighted_r2", "weighted_slope", "weighted_intercept", "pearson_r2", "published_r2"};
std::string format_validation(const std::vector<ValidationReport>& reports);

/// CSV `country,task,model_pct,official_pct,population`, one row per pair.
std::string scatter_export(const std::vector<ValidationReport>& reports);

}  // namespace geosdg::aggregate
