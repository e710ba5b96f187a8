#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>

#include "commands.hpp"
#include "geosdg/error.hpp"

namespace {

using namespace geosdg;
using namespace geosdg::cli;

enum Exit { kOk = 0, kUnexpected = 1, kConfig = 2, kIngest = 3, kNumerical = 4, kDegenerate = 5 };

void add_common(CLI::App* sub, Common& c, bool uses_preset) {
  sub->add_option("--seed", c.seed, "Seed for every random draw (required where randomness is used)");
  if (uses_preset) {
    sub->add_option("--preset", c.preset, "Model preset")->check(CLI::IsMember({"base", "desk"}))->capture_default_str();
  }
  sub->add_option("--out-dir", c.out_dir, "Output directory")->required();
}

int run(int argc, char** argv) {
  CLI::App app{"geosdg: self-supervised tile embeddings, k-NN labels and national aggregates"};
  app.set_config("--config", "", "INI/TOML file of flag values; command-line flags win");
  app.require_subcommand(1, 1);
  app.get_formatter()->column_width(40);

  Common common;
  std::function<void()> action;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-data", "Write a procedural tile corpus with survey, population and official CSVs");
  add_common(s, common, false);
  s->add_option("--n-tiles", synth.n_tiles, "Tile count")->capture_default_str();
  s->add_option("--balance", synth.balance, "Fraction of served locations")->capture_default_str();
  s->add_option("--label-noise", synth.label_noise, "Probability of flipping each task label")->capture_default_str();
  s->add_option("--image-size", synth.image_size, "Tile side in pixels")->capture_default_str();
  s->add_option("--bands", synth.bands, "Band count")->capture_default_str();
  s->add_option("--tiles-per-location", synth.tiles_per_location, "Tiles drawn per survey location")
      ->capture_default_str();
  s->callback([&] { action = [&] { cmd_synth_data(common, synth); }; });

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Self-distillation pre-training of the ViT");
  add_common(p, common, true);
  p->add_option("--manifest", pre.manifest, "Tile manifest CSV")->required();
  p->add_option("--steps", pre.steps, "Optimizer steps")->capture_default_str();
  p->add_option("--batch-size", pre.batch_size, "Tiles per step")->capture_default_str();
  p->add_flag("--strict", pre.strict, "Reject batch sizes outside [16, 32]");
  p->add_option("--resume", pre.resume, "Training-state checkpoint to continue from");
  p->add_option("--save-every", pre.save_every, "Write state_step<k>.gsdg every k steps (0: final only)")
      ->capture_default_str();
  p->add_option("--max-cloud", pre.max_cloud, "Cloud-cover ceiling in percent")->capture_default_str();
  p->add_option("--image-size", pre.image_size, "Override the preset image size");
  p->add_option("--lr", pre.lr, "Peak learning rate")->capture_default_str();
  p->add_option("--wd-start", pre.wd_start, "Weight decay at the first step")->capture_default_str();
  p->add_option("--wd-end", pre.wd_end, "Weight decay at the last step")->capture_default_str();
  p->add_option("--log-every", pre.log_every, "Log one step record every n steps")->capture_default_str();
  p->callback([&] { action = [&] { cmd_pretrain(common, pre); }; });

  EmbedArgs emb;
  auto* e = app.add_subcommand("embed", "Embed manifest tiles with a trained model");
  add_common(e, common, false);
  e->add_option("--checkpoint", emb.checkpoint, "Model or training-state checkpoint (teacher weights)")->required();
  e->add_option("--manifest", emb.manifest, "Tile manifest CSV")->required();
  e->add_option("--survey", emb.survey, "Survey CSV; adds task labels to joined tiles");
  e->add_option("--task", emb.task, "piped_water, sewage or both")->capture_default_str();
  e->add_option("--pool", emb.pool, "cls or mean token pooling")->check(CLI::IsMember({"cls", "mean"}))
      ->capture_default_str();
  e->add_option("--max-cloud", emb.max_cloud, "Cloud-cover ceiling in percent")->capture_default_str();
  e->add_option("--radius-m", emb.radius_m, "Survey join radius in metres")->capture_default_str();
  e->callback([&] { action = [&] { cmd_embed(common, emb); }; });

  KnnEvalArgs kn;
  auto* k = app.add_subcommand("knn-eval", "k sweep of the k-NN classifier on held-out rows");
  add_common(k, common, false);
  k->add_option("--embeddings", kn.embeddings, "Labeled embeddings CSV (index rows)")->required();
  k->add_option("--validation", kn.validation, "Labeled embeddings CSV of validation rows");
  k->add_option("--split", kn.split, "Hold out this fraction of groups instead of --validation");
  k->add_option("--manifest", kn.manifest, "Manifest used to group --split by location");
  k->add_option("--ks", kn.ks, "k values")->delimiter(',')->capture_default_str();
  k->add_option("--task", kn.task, "piped_water, sewage or both")->capture_default_str();
  k->add_flag("--normalize", kn.normalize, "L2-normalize embeddings before search");
  k->callback([&] { action = [&] { cmd_knn_eval(common, kn); }; });

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Label query tiles and fuse them per location");
  add_common(i, common, false);
  i->add_option("--index", inf.index, "Labeled embeddings CSV")->required();
  i->add_option("--queries", inf.queries, "Embeddings CSV of tiles to label")->required();
  i->add_option("--manifest", inf.manifest, "Manifest with tile coordinates and locations")->required();
  i->add_option("--k", inf.k, "Neighbors per vote")->capture_default_str();
  i->add_option("--task", inf.task, "piped_water, sewage or both")->capture_default_str();
  i->add_flag("--normalize", inf.normalize, "L2-normalize embeddings before search");
  i->callback([&] { action = [&] { cmd_infer(common, inf); }; });

  AggregateArgs agg;
  auto* g = app.add_subcommand("aggregate", "Population-weighted national access estimates");
  add_common(g, common, false);
  g->add_option("--locations", agg.locations, "Location labels CSV")->required();
  g->add_option("--population", agg.population, "Population cells CSV")->required();
  g->add_option("--radius-km", agg.radius_km, "Cell-to-location assignment radius")->capture_default_str();
  g->add_option("--task", agg.task, "piped_water, sewage or both")->capture_default_str();
  g->add_option("--survey", agg.survey, "Survey CSV; also writes urban/rural rates");
  g->callback([&] { action = [&] { cmd_aggregate(common, agg); }; });

  ValidateArgs val;
  auto* v = app.add_subcommand("validate", "Compare national estimates with official statistics");
  add_common(v, common, false);
  v->add_option("--estimates", val.estimates, "Country estimates CSV")->required();
  v->add_option("--official", val.official, "Official statistics CSV")->required();
  v->add_option("--population", val.population, "Population cells CSV for the weighted fit");
  v->add_option("--task", val.task, "piped_water, sewage or both")->capture_default_str();
  v->callback([&] { action = [&] { cmd_validate(common, val); }; });

  AttnVizArgs att;
  auto* t = app.add_subcommand("attn-viz", "Per-head CLS attention grids for one tile");
  add_common(t, common, true);
  t->add_option("--checkpoint", att.checkpoint, "Checkpoint; without it the preset is initialized from --seed");
  t->add_option("--tile", att.tile, "Tile file (.gtil)")->required();
  t->add_option("--layer", att.layer, "Encoder layer (default: last)");
  t->add_option("--image-size", att.image_size, "Override the preset image size (no checkpoint)");
  t->callback([&] { action = [&] { cmd_attn_viz(common, att); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kConfig;
  }

  try {
    if (!common.out_dir.empty()) std::filesystem::create_directories(common.out_dir);
    action();
    return kOk;
  } catch (const ConfigError& ex) {
    spdlog::error("config: {}", ex.what());
    return kConfig;
  } catch (const ShapeError& ex) {
    spdlog::error("config: {}", ex.what());
    return kConfig;
  } catch (const NumericalError& ex) {
    spdlog::error("numerical: {}", ex.what());
    return kNumerical;
  } catch (const DegenerateFit& ex) {
    spdlog::error("degenerate fit: {}", ex.what());
    return kDegenerate;
  } catch (const IngestError& ex) {
    spdlog::error("ingest: {}", ex.what());
    return kIngest;
  } catch (const FormatError& ex) {
    spdlog::error("ingest: {}", ex.what());
    return kIngest;
  } catch (const InvalidValue& ex) {
    spdlog::error("ingest: {}", ex.what());
    return kIngest;
  } catch (const std::filesystem::filesystem_error& ex) {
    spdlog::error("ingest: {}", ex.what());
    return kIngest;
  } catch (const std::exception& ex) {
    spdlog::error("unexpected: {}", ex.what());
    return kUnexpected;
  }
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_logger_st("geosdg");
  logger->set_pattern("geosdg %l: %v");
  spdlog::set_default_logger(logger);
  return run(argc, argv);
}
