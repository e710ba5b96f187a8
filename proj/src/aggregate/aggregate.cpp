#include "geosdg/aggregate/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

#include "geosdg/csv.hpp"
#include "geosdg/error.hpp"
#include "geosdg/ingest/geo.hpp"
#include "geosdg/io.hpp"

namespace geosdg::aggregate {

namespace {

std::string row_tag(const csv::Table& t, std::size_t i) { return t.source + " row " + std::to_string(t.lines[i]); }

std::string opt_fixed2(const std::optional<double>& v) { return v ? csv::fixed2(*v) : std::string(); }

}  // namespace

std::vector<PopulationCell> read_population(const std::filesystem::path& path) {
  const auto t = csv::read(path, kPopulationHeader);
  std::vector<PopulationCell> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    PopulationCell c{csv::to_double(t, i, 0), csv::to_double(t, i, 1), csv::to_double(t, i, 2), t.rows[i][3]};
    if (c.population < 0) throw FormatError(row_tag(t, i) + ": negative population");
    if (c.country.empty()) throw FormatError(row_tag(t, i) + ": empty country");
    out.push_back(std::move(c));
  }
  return out;
}

std::string format_population(const std::vector<PopulationCell>& cells) {
  std::string out = csv::join(kPopulationHeader) + "\n";
  for (const auto& c : cells) {
    out += csv::join({csv::shortest(c.lat), csv::shortest(c.lon), csv::shortest(c.population), c.country}) + "\n";
  }
  return out;
}

std::map<std::string, double> population_by_country(const std::vector<PopulationCell>& cells) {
  std::map<std::string, double> out;
  for (const auto& c : cells) out[c.country] += c.population;
  return out;
}

std::vector<OfficialStat> read_official(const std::filesystem::path& path) {
  const auto t = csv::read(path, kOfficialHeader);
  std::vector<OfficialStat> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    OfficialStat s;
    s.country = t.rows[i][0];
    if (s.country.empty()) throw FormatError(row_tag(t, i) + ": empty country");
    s.year = static_cast<int>(csv::to_int(t, i, 1));
    s.piped_pct = csv::to_optional_double(t, i, 2);
    s.sewage_pct = csv::to_optional_double(t, i, 3);
    for (const auto& v : {s.piped_pct, s.sewage_pct})
      if (v && (*v < 0 || *v > 100)) throw FormatError(row_tag(t, i) + ": percentage outside [0,100]");
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_official(const std::vector<OfficialStat>& stats) {
  std::string out = csv::join(kOfficialHeader) + "\n";
  for (const auto& s : stats) {
    out += csv::join({s.country, std::to_string(s.year), opt_fixed2(s.piped_pct), opt_fixed2(s.sewage_pct)}) + "\n";
  }
  return out;
}

Fused fuse_predictions(std::span<const int> tile_predictions) {
  if (tile_predictions.empty()) throw InvalidValue("fuse_predictions: empty group");
  std::size_t pos = 0;
  for (int p : tile_predictions) {
    if (p != 0 && p != 1) throw InvalidValue("fuse_predictions: predictions must be 0 or 1");
    pos += static_cast<std::size_t>(p);
  }
  Fused f;
  f.score = static_cast<double>(pos) / static_cast<double>(tile_predictions.size());
  f.label = 2 * pos > tile_predictions.size() ? 1 : 0;
  return f;
}

std::vector<LocationLabel> read_locations(const std::filesystem::path& path) {
  const auto t = csv::read(path, kLocationHeader);
  std::vector<LocationLabel> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    LocationLabel l;
    l.location_id = t.rows[i][0];
    try {
      l.task = ingest::parse_task(t.rows[i][1]);
    } catch (const ConfigError& e) {
      throw FormatError(row_tag(t, i) + ": " + e.what());
    }
    l.lat = csv::to_double(t, i, 2);
    l.lon = csv::to_double(t, i, 3);
    l.country = t.rows[i][4];
    l.n_tiles = static_cast<std::size_t>(csv::to_int(t, i, 5));
    l.score = csv::to_double(t, i, 6);
    l.label = csv::to_bool01(t, i, 7) ? 1 : 0;
    out.push_back(std::move(l));
  }
  return out;
}

std::string format_locations(const std::vector<LocationLabel>& locs) {
  std::string out = csv::join(kLocationHeader) + "\n";
  for (const auto& l : locs) {
    out += csv::join({l.location_id, std::string(ingest::task_name(l.task)), csv::shortest(l.lat), csv::shortest(l.lon),
                      l.country, std::to_string(l.n_tiles), csv::shortest(l.score), std::to_string(l.label)}) +
           "\n";
  }
  return out;
}

AccessResult population_weighted_access(const std::vector<LocationLabel>& locations,
                                        const std::vector<PopulationCell>& cells, Task task, double radius_m) {
  if (!(radius_m > 0)) throw ConfigError("assignment radius must be positive");
  std::vector<const LocationLabel*> locs;
  for (const auto& l : locations)
    if (l.task == task) locs.push_back(&l);

  struct Acc {
    double pop = 0, pos = 0, unassigned = 0;
    std::size_t unassigned_cells = 0;
    std::set<std::string> used;
  };
  std::map<std::string, Acc> acc;
  for (const auto& c : cells) {
    if (c.country.empty()) throw InvalidValue("population cell without country");
    if (c.population < 0) throw InvalidValue("negative population in cell");
    const LocationLabel* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto* l : locs) {
      const double d = ingest::haversine_m(c.lat, c.lon, l->lat, l->lon);
      if (d < best_d || (d == best_d && best && l->location_id < best->location_id)) {
        best_d = d;
        best = l;
      }
    }
    auto& a = acc[c.country];
    if (best == nullptr || best_d > radius_m) {
      a.unassigned += c.population;
      ++a.unassigned_cells;
      continue;
    }
    a.pop += c.population;
    a.pos += c.population * best->label;
    a.used.insert(best->location_id);
  }

  AccessResult r;
  for (const auto& [country, a] : acc) {
    r.coverage.push_back({country, a.pop, a.unassigned, a.unassigned_cells});
    if (a.used.empty()) {
      r.diagnostics.push_back(country + ": no population cell within " + csv::shortest(radius_m) +
                              " m of a predicted location, estimate omitted");
      continue;
    }
    if (!(a.pop > 0)) {
      r.diagnostics.push_back(country + ": assigned cells carry zero population, estimate omitted");
      continue;
    }
    r.estimates.push_back({country, task, a.pos / a.pop, a.pop, a.used.size()});
  }
  return r;
}

std::vector<CountryEstimate> read_estimates(const std::filesystem::path& path) {
  const auto t = csv::read(path, kEstimateHeader);
  std::vector<CountryEstimate> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    CountryEstimate e;
    e.country = t.rows[i][0];
    try {
      e.task = ingest::parse_task(t.rows[i][1]);
    } catch (const ConfigError& err) {
      throw FormatError(row_tag(t, i) + ": " + err.what());
    }
    e.access_fraction = csv::to_double(t, i, 2);
    if (e.access_fraction < 0 || e.access_fraction > 1) throw FormatError(row_tag(t, i) + ": access_fraction outside [0,1]");
    e.population_covered = csv::to_double(t, i, 3);
    e.n_locations = static_cast<std::size_t>(csv::to_int(t, i, 4));
    out.push_back(std::move(e));
  }
  return out;
}

std::string format_estimates(const std::vector<CountryEstimate>& est) {
  std::string out = csv::join(kEstimateHeader) + "\n";
  for (const auto& e : est) {
    out += csv::join({e.country, std::string(ingest::task_name(e.task)), csv::fixed(e.access_fraction, 4),
                      csv::shortest(e.population_covered), std::to_string(e.n_locations)}) +
           "\n";
  }
  return out;
}

std::string format_coverage(const std::vector<CoverageRow>& rows) {
  std::string out = "country,assigned_population,unassigned_population,unassigned_cells\n";
  for (const auto& r : rows) {
    out += csv::join({r.country, csv::shortest(r.assigned_population), csv::shortest(r.unassigned_population),
                      std::to_string(r.unassigned_cells)}) +
           "\n";
  }
  return out;
}

std::optional<double> UrbanRuralRow::urban_pct() const {
  if (urban_n == 0) return std::nullopt;
  return 100.0 * static_cast<double>(urban_pos) / static_cast<double>(urban_n);
}

std::optional<double> UrbanRuralRow::rural_pct() const {
  if (rural_n == 0) return std::nullopt;
  return 100.0 * static_cast<double>(rural_pos) / static_cast<double>(rural_n);
}

std::vector<UrbanRuralRow> urban_rural_rates(const std::vector<ingest::SurveyRecord>& survey) {
  std::map<std::tuple<std::string, int, int>, UrbanRuralRow> cells;
  for (const auto& r : survey) {
    for (Task task : ingest::kTasks) {
      auto& row = cells[{r.country, r.round, static_cast<int>(task)}];
      row.country = r.country;
      row.round = r.round;
      row.task = task;
      const std::size_t pos = r.label(task) ? 1 : 0;
      if (r.urban) {
        ++row.urban_n;
        row.urban_pos += pos;
      } else {
        ++row.rural_n;
        row.rural_pos += pos;
      }
    }
  }
  std::vector<UrbanRuralRow> out;
  for (auto& [k, v] : cells) out.push_back(std::move(v));
  return out;
}

std::string format_urban_rural(const std::vector<UrbanRuralRow>& rows) {
  std::string out = "country,round,task,urban_pct,rural_pct,urban_n,rural_n\n";
  for (const auto& r : rows) {
    out += csv::join({r.country, std::to_string(r.round), std::string(ingest::task_name(r.task)),
                      opt_fixed2(r.urban_pct()), opt_fixed2(r.rural_pct()), std::to_string(r.urban_n),
                      std::to_string(r.rural_n)}) +
           "\n";
  }
  return out;
}

Fit r_squared(std::span<const double> model, std::span<const double> official, std::span<const double> weights) {
  if (model.size() != official.size()) throw ShapeError("r_squared: model and official lengths differ");
  if (!weights.empty() && weights.size() != model.size()) throw ShapeError("r_squared: weight length differs");
  const std::size_t n = model.size();
  if (n < 2) throw DegenerateFit("r_squared: need at least two pairs, got " + std::to_string(n));
  auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(model[i]) || !std::isfinite(official[i])) throw InvalidValue("r_squared: non-finite value");
    if (!(w(i) > 0) || !std::isfinite(w(i))) throw InvalidValue("r_squared: weights must be positive");
    sw += w(i);
    sx += w(i) * model[i];
    sy += w(i) * official[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = model[i] - mx, dy = official[i] - my;
    sxx += w(i) * dx * dx;
    sxy += w(i) * dx * dy;
    syy += w(i) * dy * dy;
  }
  if (!(sxx > 0)) throw DegenerateFit("r_squared: model values have zero variance");
  if (!(syy > 0)) throw DegenerateFit("r_squared: official values have zero variance");
  Fit f;
  f.n = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = official[i] - (f.intercept + f.slope * model[i]);
    ss_res += w(i) * r * r;
  }
  f.r2 = 1.0 - ss_res / syy;
  return f;
}

double pearson_r2(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson_r2: lengths differ");
  const std::size_t n = x.size();
  if (n < 2) throw DegenerateFit("pearson_r2: need at least two pairs");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0) || !(syy > 0)) throw DegenerateFit("pearson_r2: zero variance");
  return (sxy * sxy) / (sxx * syy);
}

ValidationReport validate(const std::vector<CountryEstimate>& estimates, const std::vector<OfficialStat>& official,
                          Task task, const std::map<std::string, double>* population) {
  ValidationReport rep;
  rep.task = task;
  rep.published_r2 = task == Task::piped_water ? kPublishedR2Piped : kPublishedR2Sewage;

  std::map<std::string, const CountryEstimate*> model;
  for (const auto& e : estimates)
    if (e.task == task) model[e.country] = &e;
  std::map<std::string, std::optional<double>> off;
  for (const auto& s : official) off[s.country] = s.pct(task);

  std::set<std::string> countries;
  for (const auto& [c, _] : model) countries.insert(c);
  for (const auto& [c, _] : off) countries.insert(c);
  for (const auto& c : countries) {
    auto m = model.find(c);
    auto o = off.find(c);
    if (m == model.end() || o == off.end() || !o->second) {
      ++rep.n_dropped;
      continue;
    }
    double pop = m->second->population_covered;
    if (population) {
      auto p = population->find(c);
      pop = p == population->end() ? 0.0 : p->second;
    }
    rep.pairs.push_back({c, m->second->access_fraction * 100.0, *o->second, pop});
  }

  std::vector<double> x, y, w;
  bool all_weighted = true;
  for (const auto& p : rep.pairs) {
    x.push_back(p.model_pct);
    y.push_back(p.official_pct);
    w.push_back(p.population);
    all_weighted = all_weighted && p.population > 0;
  }
  rep.fit = r_squared(x, y);
  rep.pearson_r2 = pearson_r2(x, y);
  if (all_weighted) rep.weighted = r_squared(x, y, w);
  return rep;
}

std::string format_validation(const std::vector<ValidationReport>& reports) {
  std::string out = csv::join(kValidationHeader) + "\n";
  for (const auto& r : reports) {
    std::vector<std::string> f{std::string(ingest::task_short(r.task)), std::to_string(r.pairs.size()),
                               std::to_string(r.n_dropped), csv::shortest(r.fit.r2), csv::shortest(r.fit.slope),
                               csv::shortest(r.fit.intercept)};
    if (r.weighted) {
      f.push_back(csv::shortest(r.weighted->r2));
      f.push_back(csv::shortest(r.weighted->slope));
      f.push_back(csv::shortest(r.weighted->intercept));
    } else {
      f.insert(f.end(), 3, "");
    }
    f.push_back(csv::shortest(r.pearson_r2));
    f.push_back(csv::shortest(r.published_r2));
    out += csv::join(f) + "\n";
  }
  return out;
}

std::string scatter_export(const std::vector<ValidationReport>& reports) {
  std::string out = "country,task,model_pct,official_pct,population\n";
  for (const auto& r : reports) {
    for (const auto& p : r.pairs) {
      out += csv::join({p.country, std::string(ingest::task_short(r.task)), csv::fixed2(p.model_pct),
                        csv::fixed2(p.official_pct), csv::shortest(p.population)}) +
             "\n";
    }
  }
  return out;
}

}  // namespace geosdg::aggregate
