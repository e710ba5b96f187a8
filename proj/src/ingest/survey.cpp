#include "geosdg/ingest/survey.hpp"

#include "geosdg/csv.hpp"
#include "geosdg/error.hpp"
#include "geosdg/io.hpp"

namespace geosdg::ingest {

std::string_view task_name(Task t) { return t == Task::piped_water ? "piped_water" : "sewage"; }
std::string_view task_short(Task t) { return t == Task::piped_water ? "piped" : "sewage"; }

Task parse_task(std::string_view name) {
  if (name == "piped_water" || name == "piped") return Task::piped_water;
  if (name == "sewage") return Task::sewage;
  throw ConfigError("unknown task '" + std::string(name) + "', expected piped_water or sewage");
}

std::vector<SurveyRecord> parse_survey(std::string_view text, const std::string& source) {
  const auto t = csv::parse(text, source, kSurveyHeader);
  std::vector<SurveyRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    SurveyRecord r;
    r.location_id = t.rows[i][0];
    if (r.location_id.empty()) throw FormatError(source + " row " + std::to_string(t.lines[i]) + ": empty location_id");
    r.lat = csv::to_double(t, i, 1);
    r.lon = csv::to_double(t, i, 2);
    r.round = static_cast<int>(csv::to_int(t, i, 3));
    if (r.round < 7 || r.round > 9) {
      throw FormatError(source + " row " + std::to_string(t.lines[i]) + ": round must be 7, 8 or 9");
    }
    r.urban = csv::to_bool01(t, i, 4);
    r.piped_water = csv::to_bool01(t, i, 5);
    r.sewage = csv::to_bool01(t, i, 6);
    r.country = t.rows[i][7];
    if (r.country.empty()) throw FormatError(source + " row " + std::to_string(t.lines[i]) + ": empty country");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SurveyRecord> read_survey(const std::filesystem::path& path) {
  return parse_survey(io::read_file(path), path.string());
}

std::string format_survey(const std::vector<SurveyRecord>& records) {
  std::string out = csv::join(kSurveyHeader) + "\n";
  for (const auto& r : records) {
    out += csv::join({r.location_id, csv::shortest(r.lat), csv::shortest(r.lon), std::to_string(r.round),
                      r.urban ? "1" : "0", r.piped_water ? "1" : "0", r.sewage ? "1" : "0", r.country});
    out += '\n';
  }
  return out;
}

}  // namespace geosdg::ingest
