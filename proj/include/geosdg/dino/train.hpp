#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geosdg/dino/augment.hpp"
#include "geosdg/ingest/manifest.hpp"
#include "geosdg/ingest/preprocess.hpp"
#include "geosdg/numerics/tensor.hpp"
#include "geosdg/vit/checkpoint.hpp"
#include "geosdg/vit/params.hpp"

namespace geosdg::dino {

struct DinoConfig {
  double student_temp = 0.1;
  double teacher_temp = 0.04;
  double center_momentum = 0.9;
  double lambda_start = 0.996, lambda_end = 1.0;
  double lr_peak = 5e-4, lr_min = 1e-6;
  double warmup_fraction = 0.1;
  double wd_start = 0.04, wd_end = 0.4;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double clip_norm = 3.0;  ///< per tensor; 0 disables
  std::size_t batch_size = 16;
  std::size_t steps = 300;
  std::size_t save_every = 0;  ///< 0: only the final state
  bool strict = false;         ///< batch size must lie in [16, 32]
  double collapse_floor = 1e-3;
  AugmentSpec augment;
};

void validate(const DinoConfig& c);

/// Augmentation matched to a model: globals at image size, locals at half
/// size rounded down to a patch multiple.
AugmentSpec default_augment(const vit::ModelConfig& model);

// Schedules over `total` steps, evaluated at 0-based step i.
std::size_t warmup_steps(const DinoConfig& c, std::size_t total);
double lr_at(const DinoConfig& c, std::size_t i, std::size_t total);
double wd_at(const DinoConfig& c, std::size_t i, std::size_t total);
double lambda_at(const DinoConfig& c, std::size_t i, std::size_t total);

/// teacher <- lambda * teacher + (1 - lambda) * student, per element.
void ema_update(std::vector<Tensor<float>>& teacher, const std::vector<Tensor<float>>& student, double lambda);
void ema_update(vit::VitParams<float>& teacher, const vit::VitParams<float>& student, double lambda);

/// c <- m * c + (1 - m) * mean over the rows of `teacher_logits` [B, N].
void update_center(Tensor<float>& center, const Tensor<float>& teacher_logits, double m);

struct DinoState {
  vit::VitParams<float> student;
  vit::VitParams<float> teacher;
  Tensor<float> center;  ///< [N]
  std::vector<Tensor<float>> adam_m, adam_v;
  std::uint64_t step = 0;
  std::uint64_t total_steps = 0;
  std::uint64_t seed = 0;
};

/// Student from init_params(config, seed), teacher a copy, zero center and moments.
DinoState init_state(const vit::ModelConfig& config, std::uint64_t seed, std::uint64_t total_steps);

struct StepResult {
  std::uint64_t step = 0;  ///< index of the step just taken
  double loss = 0;
  double lr = 0, wd = 0, lambda = 0;
  double collapse_metric = 0;
};

/// One AdamW step on the student, then the EMA teacher update, then the center
/// update. Tiles are standardized [bands, H, W]. NumericalError names the step.
StepResult train_step(DinoState& state, const DinoConfig& config, std::span<const Tensor<float>> batch);

/// Dataset position -> tile index; a fresh seeded permutation per epoch.
class DataOrder {
 public:
  DataOrder(std::size_t n, std::uint64_t seed);
  std::size_t at(std::uint64_t position);

 private:
  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = UINT64_MAX;
  std::vector<std::size_t> perm_;
};

// training-state checkpoints

vit::Checkpoint state_checkpoint(const DinoState& s, const ingest::BandStats& stats, std::size_t batch_size);
DinoState state_from_checkpoint(const vit::Checkpoint& ckpt);
ingest::BandStats stats_from_checkpoint(const vit::Checkpoint& ckpt);
/// Teacher weights plus input statistics.
vit::Checkpoint export_model(const DinoState& s, const ingest::BandStats& stats);

struct LogRow {
  std::uint64_t step = 0;
  double loss = 0, lr = 0, wd = 0, lambda = 0, collapse_metric = 0;
};

inline constexpr const char* kLossLogHeader = "step,loss,lr,wd,lambda,collapse_metric";
std::string format_loss_log(const std::vector<LogRow>& rows);
std::vector<LogRow> read_loss_log(const std::filesystem::path& path);

struct PretrainOptions {
  vit::ModelConfig model;
  DinoConfig dino;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  double max_cloud = 10.0;
  std::function<void(const StepResult&)> on_step;
  std::function<void(const std::string&)> on_warning;
};

struct PretrainResult {
  DinoState state;
  ingest::BandStats stats;
  std::vector<LogRow> log;
  std::vector<std::string> warnings;
  std::vector<std::filesystem::path> checkpoints;
};

/// Trains on the cloud-filtered manifest tiles. Writes state.gsdg, model.gsdg,
/// state_step<k>.gsdg per save interval and loss_log.csv under out_dir.
PretrainResult pretrain(const ingest::Manifest& manifest, const PretrainOptions& opt);

}  // namespace geosdg::dino
