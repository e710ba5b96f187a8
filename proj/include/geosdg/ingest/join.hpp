#pragma once

#include <map>
#include <string>
#include <vector>

#include "geosdg/ingest/manifest.hpp"
#include "geosdg/ingest/survey.hpp"

namespace geosdg::ingest {

struct LabeledTile {
  std::string tile_id;
  std::string location_id;
  double distance_m = 0;  ///< 0 for direct location_id links
  const SurveyRecord* record = nullptr;
};

struct JoinSkip {
  std::string tile_id;
  std::string reason;
};

struct JoinReport {
  std::vector<LabeledTile> joined;  ///< manifest order
  std::vector<JoinSkip> skipped;    ///< manifest order
  std::map<int, std::size_t> per_round;  ///< joined tiles per survey round
};

/// Tiles carrying a location_id take that record's labels (radius ignored;
/// an unknown id is a skip). Others join the nearest survey point within
/// radius_m, ties broken by survey order. The report points into `survey`.
JoinReport join_labels(const Manifest& m, const std::vector<SurveyRecord>& survey, double radius_m = 1000.0);

}  // namespace geosdg::ingest
