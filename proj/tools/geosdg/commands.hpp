#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace geosdg::cli {

namespace fs = std::filesystem;

struct Common {
  std::optional<std::uint64_t> seed;
  std::string preset = "desk";
  fs::path out_dir;
};

struct SynthArgs {
  std::size_t n_tiles = 400;
  double balance = 0.5;
  double label_noise = 0.0;
  std::size_t image_size = 32;
  std::size_t bands = 3;
  std::size_t tiles_per_location = 2;
};

struct PretrainArgs {
  fs::path manifest;
  std::size_t steps = 300;
  std::size_t batch_size = 16;
  bool strict = false;
  std::optional<fs::path> resume;
  std::size_t save_every = 0;
  double max_cloud = 10.0;
  std::optional<std::size_t> image_size;
  double lr = 5e-4;
  double wd_start = 0.04, wd_end = 0.4;
  std::size_t log_every = 10;
};

struct EmbedArgs {
  fs::path checkpoint;
  fs::path manifest;
  std::optional<fs::path> survey;
  std::string task = "both";
  std::string pool = "cls";
  double max_cloud = 10.0;
  double radius_m = 1000.0;
};

struct KnnEvalArgs {
  fs::path embeddings;
  std::optional<fs::path> validation;
  std::optional<double> split;
  std::optional<fs::path> manifest;  ///< groups the split by location
  std::vector<std::size_t> ks = {5, 10, 50, 100, 200};
  std::string task = "both";
  bool normalize = false;
};

struct InferArgs {
  fs::path index;
  fs::path queries;
  fs::path manifest;
  std::size_t k = 5;
  std::string task = "both";
  bool normalize = false;
};

struct AggregateArgs {
  fs::path locations;
  fs::path population;
  double radius_km = 5.0;
  std::string task = "both";
  std::optional<fs::path> survey;
};

struct ValidateArgs {
  fs::path estimates;
  fs::path official;
  std::optional<fs::path> population;
  std::string task = "both";
};

struct AttnVizArgs {
  std::optional<fs::path> checkpoint;
  fs::path tile;
  std::optional<std::size_t> layer;
  std::optional<std::size_t> image_size;
};

void cmd_synth_data(const Common& c, const SynthArgs& a);
void cmd_pretrain(const Common& c, const PretrainArgs& a);
void cmd_embed(const Common& c, const EmbedArgs& a);
void cmd_knn_eval(const Common& c, const KnnEvalArgs& a);
void cmd_infer(const Common& c, const InferArgs& a);
void cmd_aggregate(const Common& c, const AggregateArgs& a);
void cmd_validate(const Common& c, const ValidateArgs& a);
void cmd_attn_viz(const Common& c, const AttnVizArgs& a);

}  // namespace geosdg::cli
