#include "geosdg/ingest/join.hpp"

#include <limits>
#include <unordered_map>

#include "geosdg/error.hpp"
#include "geosdg/ingest/geo.hpp"

namespace geosdg::ingest {

JoinReport join_labels(const Manifest& m, const std::vector<SurveyRecord>& survey, double radius_m) {
  if (!(radius_m > 0)) throw ConfigError("join radius must be positive");
  std::unordered_map<std::string, const SurveyRecord*> by_id;
  for (const auto& r : survey) by_id.emplace(r.location_id, &r);

  JoinReport rep;
  for (const auto& t : m.records) {
    if (!t.location_id.empty()) {
      auto it = by_id.find(t.location_id);
      if (it == by_id.end()) {
        rep.skipped.push_back({t.tile_id, "location_id " + t.location_id + " not in survey"});
        continue;
      }
      rep.joined.push_back({t.tile_id, t.location_id, 0.0, it->second});
      ++rep.per_round[it->second->round];
      continue;
    }
    const SurveyRecord* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& r : survey) {
      const double d = haversine_m(t.lat, t.lon, r.lat, r.lon);
      if (d < best_d) {
        best_d = d;
        best = &r;
      }
    }
    if (best == nullptr || best_d > radius_m) {
      rep.skipped.push_back({t.tile_id, "no survey location within " + std::to_string(radius_m) + " m"});
      continue;
    }
    rep.joined.push_back({t.tile_id, best->location_id, best_d, best});
    ++rep.per_round[best->round];
  }
  return rep;
}

}  // namespace geosdg::ingest
