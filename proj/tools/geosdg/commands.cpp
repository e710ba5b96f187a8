#include "commands.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <set>
#include <unordered_map>

#include "geosdg/aggregate/aggregate.hpp"
#include "geosdg/csv.hpp"
#include "geosdg/dino/train.hpp"
#include "geosdg/error.hpp"
#include "geosdg/ingest/join.hpp"
#include "geosdg/ingest/manifest.hpp"
#include "geosdg/ingest/preprocess.hpp"
#include "geosdg/ingest/survey.hpp"
#include "geosdg/ingest/synth.hpp"
#include "geosdg/ingest/tile.hpp"
#include "geosdg/io.hpp"
#include "geosdg/knn/knn.hpp"
#include "geosdg/numerics/rng.hpp"
#include "geosdg/vit/checkpoint.hpp"
#include "geosdg/vit/model.hpp"

namespace geosdg::cli {

using ingest::Task;

namespace {

std::uint64_t need_seed(const Common& c, const char* why) {
  if (!c.seed) throw ConfigError(std::string("--seed is required for ") + why);
  return *c.seed;
}

// Before any compute: a missing file is a configuration problem for the
// training/embedding commands, and an ingest problem for the data-stage ones.
void config_input(const fs::path& p, const char* flag) {
  if (!fs::is_regular_file(p)) throw ConfigError(std::string(flag) + ": no such file " + p.string());
}

void data_input(const fs::path& p, const char* flag) {
  if (!fs::is_regular_file(p)) throw IngestError(std::string(flag) + ": no such file " + p.string());
}

std::vector<Task> tasks_for(const std::string& s) {
  if (s == "both") return {Task::piped_water, Task::sewage};
  return {ingest::parse_task(s)};
}

vit::ModelConfig model_config(const Common& c, std::optional<std::size_t> image_size) {
  auto m = vit::preset(c.preset);
  if (image_size) m.image_size = static_cast<std::uint32_t>(*image_size);
  vit::validate(m);
  return m;
}

struct LoadedModel {
  vit::VitParams<float> params;
  std::optional<ingest::BandStats> stats;
};

bool has_record(const vit::Checkpoint& ckpt, std::string_view name) {
  return std::any_of(ckpt.records.begin(), ckpt.records.end(), [&](const auto& r) { return r.name == name; });
}

LoadedModel load_model(const fs::path& path) {
  const auto ckpt = vit::read_checkpoint(path);
  LoadedModel m;
  m.params = ckpt.kind == vit::CheckpointKind::model ? vit::extract_params(ckpt) : vit::extract_params(ckpt, "teacher/");
  if (has_record(ckpt, "input/mean")) m.stats = dino::stats_from_checkpoint(ckpt);
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  io::write_file_atomic(path, text);
  spdlog::info("wrote {}", path.string());
}

void normalize_rows(std::vector<std::vector<float>>& rows) {
  for (auto& r : rows) {
    double ss = 0;
    for (float v : r) ss += static_cast<double>(v) * v;
    const double n = std::sqrt(ss);
    if (n > 0)
      for (auto& v : r) v = static_cast<float>(v / n);
  }
}

}  // namespace

void cmd_synth_data(const Common& c, const SynthArgs& a) {
  ingest::SynthOptions o;
  o.seed = need_seed(c, "synth-data");
  o.n_tiles = a.n_tiles;
  o.balance = a.balance;
  o.label_noise = a.label_noise;
  o.image_size = a.image_size;
  o.bands = a.bands;
  o.tiles_per_location = a.tiles_per_location;
  if (a.n_tiles < 2) throw ConfigError("--n-tiles must be at least 2");
  if (a.balance < 0 || a.balance > 1 || a.label_noise < 0 || a.label_noise > 1) {
    throw ConfigError("--balance and --label-noise must lie in [0, 1]");
  }
  const auto ds = ingest::synth_dataset(o);
  ingest::write_synth_dataset(c.out_dir, ds);
  write_text(c.out_dir / "manifest_stats.csv", ingest::format_manifest_stats(ingest::manifest_stats(ds.manifest)));
  spdlog::info("synth-data tiles={} locations={} out={}", ds.tiles.size(), ds.survey.size(), c.out_dir.string());
}

void cmd_pretrain(const Common& c, const PretrainArgs& a) {
  const auto seed = need_seed(c, "pretrain");
  config_input(a.manifest, "--manifest");
  if (a.resume) config_input(*a.resume, "--resume");
  dino::PretrainOptions po;
  po.model = model_config(c, a.image_size);
  po.dino.steps = a.steps;
  po.dino.batch_size = a.batch_size;
  po.dino.strict = a.strict;
  po.dino.save_every = a.save_every;
  po.dino.lr_peak = a.lr;
  po.dino.wd_start = a.wd_start;
  po.dino.wd_end = a.wd_end;
  po.dino.augment = dino::default_augment(po.model);
  dino::validate(po.dino);
  po.seed = seed;
  po.out_dir = c.out_dir;
  po.resume = a.resume;
  po.max_cloud = a.max_cloud;
  const std::size_t every = std::max<std::size_t>(1, a.log_every);
  po.on_step = [&](const dino::StepResult& r) {
    if (r.step % every == 0 || r.step + 1 == a.steps) {
      spdlog::info("step={} loss={:.6f} lr={:.3e} wd={:.4f} lambda={:.6f} collapse={:.4f}", r.step, r.loss, r.lr, r.wd,
                   r.lambda, r.collapse_metric);
    }
  };
  po.on_warning = [](const std::string& w) { spdlog::warn("{}", w); };
  const auto manifest = ingest::read_manifest(a.manifest);
  const auto res = dino::pretrain(manifest, po);
  for (const auto& p : res.checkpoints) spdlog::info("wrote {}", p.string());
  spdlog::info("pretrain steps={} out={}", res.state.step, c.out_dir.string());
}

void cmd_embed(const Common& c, const EmbedArgs& a) {
  config_input(a.checkpoint, "--checkpoint");
  config_input(a.manifest, "--manifest");
  if (a.survey) config_input(*a.survey, "--survey");
  if (a.pool != "cls" && a.pool != "mean") throw ConfigError("--pool must be cls or mean");
  const auto tasks = tasks_for(a.task);
  auto model = load_model(a.checkpoint);
  const auto manifest = ingest::filter_cloud(ingest::read_manifest(a.manifest), a.max_cloud);
  auto tiles = ingest::load_tiles(manifest);
  std::sort(tiles.begin(), tiles.end(), [](const auto& x, const auto& y) { return x.tile_id < y.tile_id; });
  if (!model.stats && !tiles.empty()) model.stats = ingest::compute_stats(tiles);

  std::vector<ingest::SurveyRecord> survey;
  std::unordered_map<std::string, const ingest::SurveyRecord*> labels;
  if (a.survey) {
    survey = ingest::read_survey(*a.survey);
    const auto report = ingest::join_labels(manifest, survey, a.radius_m);
    for (const auto& j : report.joined) labels[j.tile_id] = j.record;
    spdlog::info("join joined={} skipped={}", report.joined.size(), report.skipped.size());
  }

  std::vector<knn::EmbeddingRow> rows;
  for (const auto& t : tiles) {
    const auto f = vit::forward(model.params, ingest::standardize(t.raster, *model.stats));
    const auto& e = a.pool == "cls" ? f.embedding : f.mean_embedding;
    std::vector<float> values(e.data().begin(), e.data().end());
    const auto it = labels.find(t.tile_id);
    if (it == labels.end()) {
      rows.push_back({t.tile_id, "", std::nullopt, values});
      continue;
    }
    for (Task task : tasks) {
      rows.push_back({t.tile_id, std::string(ingest::task_name(task)), it->second->label(task) ? 1 : 0, values});
    }
  }
  write_text(c.out_dir / "embeddings.csv", knn::format_embeddings(rows, model.params.config.dim));
  spdlog::info("embed tiles={} rows={}", tiles.size(), rows.size());
}

void cmd_knn_eval(const Common& c, const KnnEvalArgs& a) {
  config_input(a.embeddings, "--embeddings");
  if (a.validation) config_input(*a.validation, "--validation");
  if (a.manifest) config_input(*a.manifest, "--manifest");
  if (a.validation.has_value() == a.split.has_value()) throw ConfigError("give exactly one of --validation or --split");
  if (a.ks.empty()) throw ConfigError("--ks is empty");
  const auto tasks = tasks_for(a.task);

  auto train_rows = knn::read_embeddings(a.embeddings);
  std::vector<knn::EmbeddingRow> val_rows;
  if (a.validation) {
    val_rows = knn::read_embeddings(*a.validation);
  } else {
    const auto seed = need_seed(c, "knn-eval --split");
    if (!(*a.split > 0 && *a.split < 1)) throw ConfigError("--split must lie in (0, 1)");
    std::map<std::string, std::string> group_of;
    if (a.manifest) {
      for (const auto& r : ingest::read_manifest(*a.manifest).records) {
        group_of[r.tile_id] = r.location_id.empty() ? r.tile_id : r.location_id;
      }
    }
    auto group = [&](const std::string& id) {
      auto it = group_of.find(id);
      return it == group_of.end() ? id : it->second;
    };
    std::set<std::string> groups;
    for (const auto& r : train_rows) groups.insert(group(r.row_id));
    if (groups.size() < 2) throw InvalidValue("--split needs at least two groups of rows");
    std::vector<std::string> order(groups.begin(), groups.end());
    Rng rng(derive_seed(seed, {0x5b117}));
    rng.shuffle(order.begin(), order.end());
    auto n_val = static_cast<std::size_t>(std::lround(*a.split * static_cast<double>(order.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, order.size() - 1);
    const std::set<std::string> val_groups(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<knn::EmbeddingRow> kept;
    std::string split_csv = "row_id,set\n";
    std::set<std::string> listed;
    for (auto& r : train_rows) {
      const bool val = val_groups.count(group(r.row_id)) > 0;
      if (listed.insert(r.row_id).second) split_csv += r.row_id + (val ? ",validation\n" : ",train\n");
      (val ? val_rows : kept).push_back(std::move(r));
    }
    train_rows = std::move(kept);
    write_text(c.out_dir / "split.csv", split_csv);
  }

  for (Task task : tasks) {
    auto train = knn::select_task(train_rows, task);
    auto val = knn::select_task(val_rows, task);
    if (train.embeddings.empty() || val.embeddings.empty()) {
      if (tasks.size() == 1) throw InvalidValue("no labeled rows for task " + std::string(ingest::task_name(task)));
      spdlog::warn("task={} skipped: train={} validation={} labeled rows", ingest::task_name(task),
                   train.embeddings.size(), val.embeddings.size());
      continue;
    }
    if (a.normalize) {
      normalize_rows(train.embeddings);
      normalize_rows(val.embeddings);
    }
    const auto index = knn::build_index(train.embeddings, train.labels, train.ids, task);
    if (index.degenerate()) spdlog::warn("{}", index.warning());
    const auto sweep = knn::sweep_k(index, val, a.ks);
    write_text(c.out_dir / ("sweep_" + std::string(ingest::task_short(task)) + ".csv"), knn::format_sweep(sweep));
    for (const auto& r : sweep.rows) {
      spdlog::info("task={} k={} accuracy={:.4f} f1={:.4f}", ingest::task_name(task), r.k, r.accuracy, r.f1);
    }
    std::cout << "best_k " << ingest::task_name(task) << ' ' << sweep.best_k << '\n';
  }
}

void cmd_infer(const Common& c, const InferArgs& a) {
  data_input(a.index, "--index");
  data_input(a.queries, "--queries");
  data_input(a.manifest, "--manifest");
  const auto tasks = tasks_for(a.task);
  const auto index_rows = knn::read_embeddings(a.index);
  const auto query_rows = knn::read_embeddings(a.queries);
  const auto manifest = ingest::read_manifest(a.manifest);
  std::unordered_map<std::string, const ingest::ManifestRecord*> by_id;
  for (const auto& r : manifest.records) by_id[r.tile_id] = &r;

  std::vector<const knn::EmbeddingRow*> queries;
  std::set<std::string> seen;
  for (const auto& r : query_rows) {
    if (!seen.insert(r.row_id).second) continue;
    if (!by_id.count(r.row_id)) throw InvalidValue("query row " + r.row_id + " is not in the manifest");
    queries.push_back(&r);
  }

  std::string tile_csv = "tile_id,task,label,votes_0,votes_1\n";
  std::vector<aggregate::LocationLabel> locations;
  for (Task task : tasks) {
    auto train = knn::select_task(index_rows, task);
    if (train.embeddings.empty()) throw InvalidValue("index has no labeled rows for " + std::string(ingest::task_name(task)));
    if (a.normalize) normalize_rows(train.embeddings);
    const auto index = knn::build_index(train.embeddings, train.labels, train.ids, task);
    if (index.degenerate()) spdlog::warn("{}", index.warning());

    struct Group {
      std::vector<int> preds;
      double lat = 0, lon = 0;
      std::string country;
    };
    std::map<std::string, Group> groups;
    for (const auto* q : queries) {
      auto values = q->values;
      if (a.normalize) {
        std::vector<std::vector<float>> one{values};
        normalize_rows(one);
        values = one[0];
      }
      const auto cls = knn::classify(index, values, a.k);
      tile_csv += csv::join({q->row_id, std::string(ingest::task_name(task)), std::to_string(cls.label),
                             std::to_string(cls.votes[0]), std::to_string(cls.votes[1])}) +
                  "\n";
      const auto* rec = by_id.at(q->row_id);
      auto& g = groups[rec->location_id.empty() ? rec->tile_id : rec->location_id];
      if (g.preds.empty()) g.country = rec->country;
      g.preds.push_back(cls.label);
      g.lat += rec->lat;
      g.lon += rec->lon;
    }
    for (const auto& [id, g] : groups) {
      const auto fused = aggregate::fuse_predictions(g.preds);
      const auto n = static_cast<double>(g.preds.size());
      locations.push_back({id, task, g.lat / n, g.lon / n, g.country, g.preds.size(), fused.score, fused.label});
    }
  }
  write_text(c.out_dir / "tile_predictions.csv", tile_csv);
  write_text(c.out_dir / "locations.csv", aggregate::format_locations(locations));
  spdlog::info("infer queries={} locations={}", queries.size(), locations.size());
}

void cmd_aggregate(const Common& c, const AggregateArgs& a) {
  data_input(a.locations, "--locations");
  data_input(a.population, "--population");
  if (a.survey) data_input(*a.survey, "--survey");
  if (!(a.radius_km > 0)) throw ConfigError("--radius-km must be positive");
  const auto tasks = tasks_for(a.task);
  const auto locations = aggregate::read_locations(a.locations);
  const auto cells = aggregate::read_population(a.population);
  std::vector<aggregate::CountryEstimate> estimates;
  for (Task task : tasks) {
    auto res = aggregate::population_weighted_access(locations, cells, task, a.radius_km * 1000.0);
    for (const auto& d : res.diagnostics) spdlog::warn("task={} {}", ingest::task_name(task), d);
    estimates.insert(estimates.end(), res.estimates.begin(), res.estimates.end());
    write_text(c.out_dir / ("coverage_" + std::string(ingest::task_short(task)) + ".csv"),
               aggregate::format_coverage(res.coverage));
  }
  write_text(c.out_dir / "country_estimates.csv", aggregate::format_estimates(estimates));
  if (a.survey) {
    write_text(c.out_dir / "urban_rural.csv",
               aggregate::format_urban_rural(aggregate::urban_rural_rates(ingest::read_survey(*a.survey))));
  }
}

void cmd_validate(const Common& c, const ValidateArgs& a) {
  data_input(a.estimates, "--estimates");
  data_input(a.official, "--official");
  if (a.population) data_input(*a.population, "--population");
  const auto tasks = tasks_for(a.task);
  const auto estimates = aggregate::read_estimates(a.estimates);
  const auto official = aggregate::read_official(a.official);
  std::optional<std::map<std::string, double>> population;
  if (a.population) population = aggregate::population_by_country(aggregate::read_population(*a.population));
  std::vector<aggregate::ValidationReport> reports;
  for (Task task : tasks) {
    reports.push_back(aggregate::validate(estimates, official, task, population ? &*population : nullptr));
    const auto& r = reports.back();
    spdlog::info("task={} n_pairs={} r2={:.6f} pearson_r2={:.6f} published_r2={}", ingest::task_name(task),
                 r.pairs.size(), r.fit.r2, r.pearson_r2, r.published_r2);
  }
  write_text(c.out_dir / "validation.csv", aggregate::format_validation(reports));
  write_text(c.out_dir / "scatter.csv", aggregate::scatter_export(reports));
}

void cmd_attn_viz(const Common& c, const AttnVizArgs& a) {
  if (a.checkpoint) config_input(*a.checkpoint, "--checkpoint");
  config_input(a.tile, "--tile");
  LoadedModel model;
  if (a.checkpoint) {
    if (a.image_size) throw ConfigError("--image-size applies only without --checkpoint");
    model = load_model(*a.checkpoint);
  } else {
    model.params = vit::init_params<float>(model_config(c, a.image_size), need_seed(c, "attn-viz without --checkpoint"));
  }
  const auto tile = ingest::load_tile(a.tile);
  const ingest::Tile one[] = {tile};
  const auto stats = model.stats ? *model.stats : ingest::compute_stats(one);
  const std::size_t layer = a.layer ? *a.layer : model.params.config.depth - 1;
  const auto overlay = vit::attention_maps(model.params, ingest::standardize(tile.raster, stats), layer);
  std::string summary = "head,cls_self,grid_sum\n";
  for (std::size_t h = 0; h < overlay.grids.size(); ++h) {
    const auto& g = overlay.grids[h];
    std::string out = "row,col,value\n";
    double total = 0;
    for (std::size_t r = 0; r < overlay.grid; ++r)
      for (std::size_t col = 0; col < overlay.grid; ++col) {
        out += std::to_string(r) + ',' + std::to_string(col) + ',' + csv::shortest(g.at(r, col)) + '\n';
        total += g.at(r, col);
      }
    char name[32];
    std::snprintf(name, sizeof name, "head_%02zu.csv", h);
    write_text(c.out_dir / name, out);
    summary += std::to_string(h) + ',' + csv::shortest(overlay.cls_self[h]) + ',' + csv::shortest(total) + '\n';
  }
  write_text(c.out_dir / "attention_summary.csv", summary);
  spdlog::info("attn-viz layer={} heads={} grid={}", layer, overlay.grids.size(), overlay.grid);
}

}  // namespace geosdg::cli
