#include "geosdg/dino/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "geosdg/csv.hpp"
#include "geosdg/dino/loss.hpp"
#include "geosdg/error.hpp"
#include "geosdg/io.hpp"
#include "geosdg/numerics/rng.hpp"
#include "geosdg/vit/model.hpp"

namespace geosdg::dino {

void validate(const DinoConfig& c) {
  if (!(c.student_temp > 0) || !(c.teacher_temp > 0)) throw ConfigError("temperatures must be positive");
  auto unit = [](double v) { return v >= 0 && v <= 1; };
  if (!unit(c.center_momentum)) throw ConfigError("center momentum must lie in [0, 1]");
  if (!unit(c.lambda_start) || !unit(c.lambda_end)) throw ConfigError("EMA momentum must lie in [0, 1]");
  if (!(c.lr_peak > 0) || c.lr_min < 0 || c.lr_min > c.lr_peak) throw ConfigError("need 0 <= lr_min <= lr_peak, lr_peak > 0");
  if (!unit(c.warmup_fraction)) throw ConfigError("warmup fraction must lie in [0, 1]");
  if (c.wd_start < 0 || c.wd_end < 0) throw ConfigError("weight decay must be non-negative");
  if (!(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1 && c.adam_eps > 0)) {
    throw ConfigError("AdamW betas must lie in [0, 1) and eps must be positive");
  }
  if (c.clip_norm < 0) throw ConfigError("clip norm must be non-negative");
  if (c.batch_size == 0) throw ConfigError("batch size must be positive");
  if (c.strict && (c.batch_size < 16 || c.batch_size > 32)) {
    throw ConfigError("strict mode: batch size " + std::to_string(c.batch_size) + " outside [16, 32]");
  }
  validate(c.augment);
}

AugmentSpec default_augment(const vit::ModelConfig& model) {
  AugmentSpec s;
  s.global_size = model.image_size;
  s.local_size = std::max<std::size_t>(model.patch_size, model.image_size / 2 / model.patch_size * model.patch_size);
  return s;
}

std::size_t warmup_steps(const DinoConfig& c, std::size_t total) {
  return static_cast<std::size_t>(std::floor(c.warmup_fraction * static_cast<double>(total)));
}

namespace {

// Half cosine from `from` at i = 0 to `to` at i = span.
double cosine(double from, double to, std::size_t i, std::size_t span) {
  if (span == 0) return from;
  const double t = static_cast<double>(std::min(i, span)) / static_cast<double>(span);
  return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace

double lr_at(const DinoConfig& c, std::size_t i, std::size_t total) {
  const std::size_t w = warmup_steps(c, total);
  if (i < w) return c.lr_peak * static_cast<double>(i + 1) / static_cast<double>(w);
  const std::size_t rest = total > w ? total - w - 1 : 0;
  return cosine(c.lr_peak, c.lr_min, i - w, rest);
}

double wd_at(const DinoConfig& c, std::size_t i, std::size_t total) {
  return cosine(c.wd_start, c.wd_end, i, total > 0 ? total - 1 : 0);
}

double lambda_at(const DinoConfig& c, std::size_t i, std::size_t total) {
  return cosine(c.lambda_start, c.lambda_end, i, total > 0 ? total - 1 : 0);
}

void ema_update(std::vector<Tensor<float>>& teacher, const std::vector<Tensor<float>>& student, double lambda) {
  if (!(lambda >= 0 && lambda <= 1)) throw InvalidValue("EMA momentum " + std::to_string(lambda) + " outside [0, 1]");
  if (teacher.size() != student.size()) throw ShapeError("ema_update: parameter counts differ");
  for (std::size_t i = 0; i < teacher.size(); ++i)
    if (teacher[i].shape() != student[i].shape()) {
      throw ShapeError("ema_update: tensor " + std::to_string(i) + " is " + shape_str(teacher[i].shape()) +
                       " in the teacher and " + shape_str(student[i].shape()) + " in the student");
    }
  const double keep = lambda, take = 1.0 - lambda;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    float* t = teacher[i].ptr();
    const float* s = student[i].ptr();
    for (std::size_t j = 0; j < teacher[i].size(); ++j) {
      t[j] = static_cast<float>(keep * static_cast<double>(t[j]) + take * static_cast<double>(s[j]));
    }
  }
}

void ema_update(vit::VitParams<float>& teacher, const vit::VitParams<float>& student, double lambda) {
  if (!teacher.same_structure(student)) throw ShapeError("ema_update: teacher and student structures differ");
  ema_update(teacher.tensors, student.tensors, lambda);
}

void update_center(Tensor<float>& center, const Tensor<float>& teacher_logits, double m) {
  if (!(m >= 0 && m <= 1)) throw InvalidValue("center momentum " + std::to_string(m) + " outside [0, 1]");
  const std::size_t n = center.size();
  if (teacher_logits.size() == 0) throw InvalidValue("update_center: empty batch");
  if (teacher_logits.cols() != n) {
    throw ShapeError("update_center: logits " + shape_str(teacher_logits.shape()) + " vs center of " +
                     std::to_string(n));
  }
  const std::size_t rows = teacher_logits.size() / n;
  for (std::size_t j = 0; j < n; ++j) {
    double mean = 0;
    for (std::size_t r = 0; r < rows; ++r) mean += static_cast<double>(teacher_logits[r * n + j]);
    mean /= static_cast<double>(rows);
    center[j] = static_cast<float>(m * static_cast<double>(center[j]) + (1.0 - m) * mean);
  }
  if (!center.all_finite()) throw NumericalError("update_center: non-finite center");
}

DinoState init_state(const vit::ModelConfig& config, std::uint64_t seed, std::uint64_t total_steps) {
  DinoState s;
  s.student = vit::init_params<float>(config, seed);
  s.teacher = s.student;
  s.center = Tensor<float>(Shape{config.proto_count});
  for (const auto& t : s.student.tensors) {
    s.adam_m.emplace_back(t.shape());
    s.adam_v.emplace_back(t.shape());
  }
  s.total_steps = total_steps;
  s.seed = seed;
  return s;
}

namespace {

void adamw(DinoState& s, const DinoConfig& c, std::vector<Tensor<float>>& grads, double lr, double wd) {
  const double t = static_cast<double>(s.step + 1);
  const double bc1 = 1.0 - std::pow(c.beta1, t), bc2 = 1.0 - std::pow(c.beta2, t);
  const auto b1 = static_cast<float>(c.beta1), b2 = static_cast<float>(c.beta2);
  const auto step_size = static_cast<float>(lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(c.adam_eps);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& g = grads[i];
    if (c.clip_norm > 0) {
      double sq = 0;
      for (float v : g.data()) sq += static_cast<double>(v) * static_cast<double>(v);
      const double coef = c.clip_norm / (std::sqrt(sq) + 1e-6);
      if (coef < 1)
        for (auto& v : g.data()) v = static_cast<float>(v * coef);
    }
    auto& p = s.student.tensors[i];
    if (p.rank() >= 2 && wd > 0) {
      const auto decay = static_cast<float>(1.0 - lr * wd);
      for (auto& v : p.data()) v *= decay;
    }
    float* m = s.adam_m[i].ptr();
    float* v = s.adam_v[i].ptr();
    float* w = p.ptr();
    const float* gp = g.ptr();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1 - b1) * gp[j];
      v[j] = b2 * v[j] + (1 - b2) * gp[j] * gp[j];
      w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

}  // namespace

StepResult train_step(DinoState& state, const DinoConfig& config, std::span<const Tensor<float>> batch) {
  if (batch.empty()) throw InvalidValue("train_step: empty batch");
  const auto& mc = state.student.config;
  const std::size_t n = mc.proto_count;
  const std::size_t total = std::max<std::uint64_t>(state.total_steps, state.step + 1);
  StepResult r;
  r.step = state.step;
  r.lr = lr_at(config, state.step, total);
  r.wd = wd_at(config, state.step, total);
  r.lambda = lambda_at(config, state.step, total);

  std::vector<Tensor<float>> grads;
  for (const auto& t : state.student.tensors) grads.emplace_back(t.shape());
  const std::size_t n_global = config.augment.n_global;
  Tensor<float> teacher_rows(Shape{batch.size() * n_global, n});
  const auto inv_batch = static_cast<float>(1.0 / static_cast<double>(batch.size()));
  double loss_sum = 0, collapse_sum = 0;

  try {
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto views = augment(batch[b], config.augment, derive_seed(state.seed, {0xa06, state.step, b}));
      ad::Tape<float> tape;
      std::vector<ad::Var<float>> teacher_logits;
      for (std::size_t g = 0; g < views.global.size(); ++g) {
        auto logits = vit::forward(state.teacher, views.global[g]).logits;
        std::copy(logits.data().begin(), logits.data().end(), teacher_rows.ptr() + (b * n_global + g) * n);
        teacher_logits.push_back(tape.constant(logits.reshaped({1, n})));
      }
      const auto vars = vit::bind_params(tape, state.student, true);
      std::vector<ad::Var<float>> student_logits;
      for (std::size_t v = 0; v < views.size(); ++v) {
        student_logits.push_back(vit::forward_on_tape<float>(mc, vars, tape.constant(views.view(v))).logits);
      }
      auto loss = dino_loss<float>(student_logits, teacher_logits, state.center, config.student_temp,
                                   config.teacher_temp);
      tape.backward(loss.loss);
      for (std::size_t i = 0; i < vars.size(); ++i) {
        const auto g = tape.grad(vars[i]);
        float* dst = grads[i].ptr();
        for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j] * inv_batch;
      }
      loss_sum += static_cast<double>(loss.loss.value()[0]);
      for (const auto& q : loss.q) collapse_sum += collapse_metric(q);
    }
  } catch (const NumericalError& e) {
    throw NumericalError("training step " + std::to_string(state.step) + ": " + e.what());
  }
  r.loss = loss_sum / static_cast<double>(batch.size());
  r.collapse_metric = collapse_sum / static_cast<double>(batch.size() * n_global);
  if (!std::isfinite(r.loss)) throw NumericalError("training step " + std::to_string(state.step) + ": non-finite loss");

  adamw(state, config, grads, r.lr, r.wd);
  for (const auto& p : state.student.tensors)
    if (!p.all_finite()) throw NumericalError("training step " + std::to_string(state.step) + ": non-finite weights");
  ema_update(state.teacher, state.student, r.lambda);
  update_center(state.center, teacher_rows, config.center_momentum);
  ++state.step;
  return r;
}

DataOrder::DataOrder(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {
  if (n == 0) throw InvalidValue("DataOrder: empty dataset");
}

std::size_t DataOrder::at(std::uint64_t position) {
  const std::uint64_t epoch = position / n_;
  if (epoch != epoch_) {
    perm_.resize(n_);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    Rng rng(derive_seed(seed_, {0xe90c, epoch}));
    rng.shuffle(perm_.begin(), perm_.end());
    epoch_ = epoch;
  }
  return perm_[position % n_];
}

namespace {

Tensor<float> stats_tensor(const std::vector<double>& v) {
  Tensor<float> t(Shape{v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
  return t;
}

void append_stats(vit::Checkpoint& ckpt, const ingest::BandStats& stats) {
  ckpt.records.push_back({"input/mean", stats_tensor(stats.mean)});
  ckpt.records.push_back({"input/std", stats_tensor(stats.std)});
}

}  // namespace

vit::Checkpoint state_checkpoint(const DinoState& s, const ingest::BandStats& stats, std::size_t batch_size) {
  vit::Checkpoint ckpt;
  ckpt.kind = vit::CheckpointKind::training_state;
  ckpt.config = s.student.config;
  vit::append_params(ckpt, s.student, "student/");
  vit::append_params(ckpt, s.teacher, "teacher/");
  for (std::size_t i = 0; i < s.adam_m.size(); ++i) {
    ckpt.records.push_back({"adam_m/" + s.student.names[i], s.adam_m[i]});
    ckpt.records.push_back({"adam_v/" + s.student.names[i], s.adam_v[i]});
  }
  ckpt.records.push_back({"center", s.center});
  append_stats(ckpt, stats);
  ckpt.scalars = {{"step", s.step}, {"total_steps", s.total_steps}, {"seed", s.seed}, {"batch_size", batch_size}};
  return ckpt;
}

DinoState state_from_checkpoint(const vit::Checkpoint& ckpt) {
  if (ckpt.kind != vit::CheckpointKind::training_state) throw FormatError("not a training-state checkpoint");
  DinoState s;
  s.student = vit::extract_params(ckpt, "student/");
  s.teacher = vit::extract_params(ckpt, "teacher/");
  for (std::size_t i = 0; i < s.student.count(); ++i) {
    const auto& name = s.student.names[i];
    s.adam_m.push_back(ckpt.record("adam_m/" + name));
    s.adam_v.push_back(ckpt.record("adam_v/" + name));
    if (s.adam_m.back().shape() != s.student.tensors[i].shape() ||
        s.adam_v.back().shape() != s.student.tensors[i].shape()) {
      throw FormatError("optimizer moments for " + name + " have the wrong shape");
    }
  }
  s.center = ckpt.record("center");
  if (s.center.shape() != Shape{ckpt.config.proto_count}) throw FormatError("center has the wrong shape");
  s.step = ckpt.scalar("step");
  s.total_steps = ckpt.scalar("total_steps");
  s.seed = ckpt.scalar("seed");
  return s;
}

ingest::BandStats stats_from_checkpoint(const vit::Checkpoint& ckpt) {
  const auto& mean = ckpt.record("input/mean");
  const auto& sd = ckpt.record("input/std");
  if (mean.size() != ckpt.config.bands || sd.size() != ckpt.config.bands) {
    throw FormatError("input statistics do not match the band count");
  }
  ingest::BandStats s;
  for (std::size_t b = 0; b < mean.size(); ++b) {
    s.mean.push_back(mean[b]);
    s.std.push_back(sd[b]);
  }
  return s;
}

vit::Checkpoint export_model(const DinoState& s, const ingest::BandStats& stats) {
  auto ckpt = vit::model_checkpoint(s.teacher);
  append_stats(ckpt, stats);
  return ckpt;
}

std::string format_loss_log(const std::vector<LogRow>& rows) {
  std::string out = std::string(kLossLogHeader) + "\n";
  for (const auto& r : rows) {
    out += csv::join({std::to_string(r.step), csv::shortest(r.loss), csv::shortest(r.lr), csv::shortest(r.wd),
                      csv::shortest(r.lambda), csv::shortest(r.collapse_metric)}) +
           "\n";
  }
  return out;
}

std::vector<LogRow> read_loss_log(const std::filesystem::path& path) {
  const auto t = csv::read(path, csv::split(kLossLogHeader));
  std::vector<LogRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    LogRow r;
    r.step = static_cast<std::uint64_t>(csv::to_int(t, i, 0));
    r.loss = csv::to_double(t, i, 1);
    r.lr = csv::to_double(t, i, 2);
    r.wd = csv::to_double(t, i, 3);
    r.lambda = csv::to_double(t, i, 4);
    r.collapse_metric = csv::to_double(t, i, 5);
    rows.push_back(r);
  }
  return rows;
}

PretrainResult pretrain(const ingest::Manifest& manifest, const PretrainOptions& opt) {
  validate(opt.dino);
  vit::validate(opt.model);
  if (opt.dino.augment.global_size != opt.model.image_size) {
    throw ConfigError("global crop size " + std::to_string(opt.dino.augment.global_size) + " differs from model image size " +
                      std::to_string(opt.model.image_size));
  }
  if (opt.dino.augment.local_size % opt.model.patch_size != 0) {
    throw ConfigError("local crop size must be a multiple of the patch size");
  }
  const auto kept = ingest::filter_cloud(manifest, opt.max_cloud);
  if (kept.records.empty()) throw IngestError("no tiles left after the cloud-cover filter");
  const auto tiles = ingest::load_tiles(kept);
  for (const auto& t : tiles) {
    if (t.raster.dim(0) != opt.model.bands) {
      throw ConfigError("tile " + t.tile_id + " has " + std::to_string(t.raster.dim(0)) + " bands, model expects " +
                        std::to_string(opt.model.bands));
    }
    if (t.raster.dim(1) < opt.model.image_size || t.raster.dim(2) < opt.model.image_size) {
      throw ConfigError("tile " + t.tile_id + " is smaller than the model image size " +
                        std::to_string(opt.model.image_size));
    }
  }

  PretrainResult res;
  const auto log_path = opt.out_dir / "loss_log.csv";
  if (opt.resume) {
    const auto ckpt = vit::read_checkpoint(*opt.resume);
    res.state = state_from_checkpoint(ckpt);
    res.stats = stats_from_checkpoint(ckpt);
    if (!(res.state.student.config == opt.model)) throw ConfigError("resume: checkpoint model config differs from the run");
    if (res.state.seed != opt.seed) throw ConfigError("resume: checkpoint seed " + std::to_string(res.state.seed) + " differs");
    if (res.state.total_steps != opt.dino.steps) {
      throw ConfigError("resume: checkpoint was trained for a " + std::to_string(res.state.total_steps) +
                        "-step schedule, run asks for " + std::to_string(opt.dino.steps));
    }
    if (ckpt.scalar("batch_size") != opt.dino.batch_size) throw ConfigError("resume: batch size differs from checkpoint");
    // earlier rows come from this run's log, else the one beside the checkpoint
    auto prior = log_path;
    if (!std::filesystem::exists(prior)) prior = opt.resume->parent_path() / "loss_log.csv";
    if (std::filesystem::exists(prior)) {
      for (const auto& row : read_loss_log(prior))
        if (row.step < res.state.step) res.log.push_back(row);
    }
  } else {
    res.state = init_state(opt.model, opt.seed, opt.dino.steps);
    res.stats = ingest::compute_stats(tiles);
    // stored as float; train on exactly what the checkpoint will hold
    for (auto& v : res.stats.mean) v = static_cast<float>(v);
    for (auto& v : res.stats.std) v = static_cast<float>(v);
  }

  std::vector<Tensor<float>> data;
  data.reserve(tiles.size());
  for (const auto& t : tiles) data.push_back(ingest::standardize(t.raster, res.stats));
  DataOrder order(data.size(), res.state.seed);

  std::filesystem::create_directories(opt.out_dir);
  const std::size_t bs = opt.dino.batch_size;
  std::vector<Tensor<float>> batch;
  while (res.state.step < opt.dino.steps) {
    batch.clear();
    for (std::size_t b = 0; b < bs; ++b) batch.push_back(data[order.at(res.state.step * bs + b)]);
    const auto r = train_step(res.state, opt.dino, batch);
    res.log.push_back({r.step, r.loss, r.lr, r.wd, r.lambda, r.collapse_metric});
    if (r.collapse_metric < opt.dino.collapse_floor) {
      std::string w = "collapse: step " + std::to_string(r.step) + " metric " + csv::shortest(r.collapse_metric) +
                      " below floor " + csv::shortest(opt.dino.collapse_floor);
      if (opt.on_warning) opt.on_warning(w);
      res.warnings.push_back(std::move(w));
    }
    if (opt.on_step) opt.on_step(r);
    if (opt.dino.save_every > 0 && res.state.step % opt.dino.save_every == 0 && res.state.step < opt.dino.steps) {
      const auto p = opt.out_dir / ("state_step" + std::to_string(res.state.step) + ".gsdg");
      vit::write_checkpoint(p, state_checkpoint(res.state, res.stats, bs));
      io::write_file_atomic(log_path, format_loss_log(res.log));
      res.checkpoints.push_back(p);
    }
  }

  vit::write_checkpoint(opt.out_dir / "state.gsdg", state_checkpoint(res.state, res.stats, bs));
  vit::write_checkpoint(opt.out_dir / "model.gsdg", export_model(res.state, res.stats));
  io::write_file_atomic(log_path, format_loss_log(res.log));
  return res;
}

}  // namespace geosdg::dino
