#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace geosdg::ingest {

enum class Task { piped_water, sewage };

std::string_view task_name(Task t);
/// Short label used in validation and scatter outputs ("piped", "sewage").
std::string_view task_short(Task t);
Task parse_task(std::string_view name);
inline constexpr Task kTasks[] = {Task::piped_water, Task::sewage};

inline const std::vector<std::string> kSurveyHeader = {"location_id", "lat",   "lon",    "round",
                                                       "urban",       "piped_water", "sewage", "country"};

struct SurveyRecord {
  std::string location_id;
  double lat = 0;
  double lon = 0;
  int round = 7;
  bool urban = false;
  bool piped_water = false;
  bool sewage = false;
  std::string country;

  bool label(Task t) const { return t == Task::piped_water ? piped_water : sewage; }
};

/// FormatError with row number for malformed rows or rounds outside {7,8,9}.
std::vector<SurveyRecord> read_survey(const std::filesystem::path& path);
std::vector<SurveyRecord> parse_survey(std::string_view text, const std::string& source);
std::string format_survey(const std::vector<SurveyRecord>& records);

}  // namespace geosdg::ingest
