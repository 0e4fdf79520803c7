#include "pixio/trainer.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace pixio::inline PIXIO_PRECISION_NS {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kBatchStream = 0xba7c;
constexpr std::uint64_t kEvalStream = 0xe7a1;

void write_augment(KeyValues& kv, const AugmentConfig& a) {
  kv.set("augment.scale_lo", a.scale_lo);
  kv.set("augment.scale_hi", a.scale_hi);
  kv.set("augment.ratio_lo", a.ratio_lo);
  kv.set("augment.ratio_hi", a.ratio_hi);
  kv.set("augment.hflip", a.hflip);
}

AugmentConfig read_augment(const KeyValues& kv, std::size_t output_size) {
  AugmentConfig a;
  a.scale_lo = kv.get_double("augment.scale_lo", a.scale_lo);
  a.scale_hi = kv.get_double("augment.scale_hi", a.scale_hi);
  a.ratio_lo = kv.get_double("augment.ratio_lo", a.ratio_lo);
  a.ratio_hi = kv.get_double("augment.ratio_hi", a.ratio_hi);
  a.hflip = kv.get_bool("augment.hflip", a.hflip);
  a.output_size = output_size;
  return a;
}

ImageBatch augment_batch(const Corpus& corpus, const std::vector<std::size_t>& idx, const AugmentConfig& aug,
                         Rng& rng) {
  std::vector<Tensor> crops;
  std::vector<std::string> ids;
  crops.reserve(idx.size());
  for (auto i : idx) {
    crops.push_back(random_resized_crop(corpus.images[i], aug, rng));
    ids.push_back(corpus.source_ids[i]);
  }
  return stack_images(crops, std::move(ids));
}

ImageBatch eval_batch(const std::vector<Image>& images, std::size_t size) {
  std::vector<Tensor> crops;
  crops.reserve(images.size());
  for (const auto& img : images) crops.push_back(center_crop_resize(img, size));
  return stack_images(crops, {});
}

void check_model_config(const Checkpoint& ckpt, const ModelConfig& expected, const std::string& prefix) {
  const ModelConfig stored = ModelConfig::read(ckpt.config, prefix);
  if (!(stored == expected)) throw FormatError("checkpoint model configuration does not match the run configuration");
}

}  // namespace

MaskConfig PretrainConfig::mask_config() const {
  return MaskConfig{mask_ratio, mask_granularity, model.grid(), model.grid()};
}

void PretrainConfig::validate() const {
  model.validate();
  optim.validate();
  mask_config().validate();
  augment.validate();
}

void PretrainConfig::write(KeyValues& kv) const {
  kv.set("command", "pretrain");
  model.write(kv);
  optim.write(kv);
  kv.set("mask.ratio", mask_ratio);
  kv.set("mask.granularity", mask_granularity);
  write_augment(kv, augment);
  kv.set("norm_target", norm_target);
  kv.set("seed", static_cast<long long>(seed));
  kv.set("checkpoint_every", checkpoint_every);
}

PretrainConfig PretrainConfig::read(const KeyValues& kv) {
  PretrainConfig c;
  c.model = ModelConfig::read(kv);
  c.optim = OptimConfig::read(kv);
  c.mask_ratio = kv.get_double("mask.ratio", c.mask_ratio);
  c.mask_granularity = kv.get_size("mask.granularity", c.mask_granularity);
  c.augment = read_augment(kv, c.model.input_size);
  c.norm_target = kv.get_bool("norm_target", c.norm_target);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  c.checkpoint_every = kv.get_size("checkpoint_every", 0);
  return c;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t corpus_size, std::size_t batch,
                                       std::size_t step) {
  if (corpus_size == 0) throw ContractError("batch_indices: empty corpus");
  std::vector<std::size_t> out;
  out.reserve(batch);
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> perm;
  for (std::size_t j = 0; j < batch; ++j) {
    const std::size_t global = step * batch + j;
    const std::size_t epoch = global / corpus_size;
    if (epoch != cached_epoch) {
      perm.resize(corpus_size);
      for (std::size_t i = 0; i < corpus_size; ++i) perm[i] = i;
      Rng r = Rng::derive(seed, {kBatchStream, epoch});
      r.shuffle(perm);
      cached_epoch = epoch;
    }
    out.push_back(perm[global % corpus_size]);
  }
  return out;
}

Pretrainer::Pretrainer(const PretrainConfig& cfg, const Corpus& corpus)
    : cfg_(cfg), corpus_(&corpus), model_(cfg.model, cfg.seed), optim_(model_.params(), cfg.optim), rng_(cfg.seed) {
  cfg_.augment.output_size = cfg_.model.input_size;
  cfg_.validate();
  if (corpus.size() == 0) throw ContractError("pretrain: empty corpus");
}

StepRecord Pretrainer::step() {
  const auto idx = batch_indices(cfg_.seed, corpus_->size(), cfg_.optim.batch_size, step_);
  ImageBatch batch = augment_batch(*corpus_, idx, cfg_.augment, rng_);
  PatchGrid target = patchify(batch, cfg_.model.patch);
  if (cfg_.norm_target) target = normalize_target(target);
  const auto plans = sample_batch_masks(cfg_.mask_config(), batch.batch(), rng_);

  Graph g;
  ForwardMode mode{true, &rng_};
  TokenStates latent = model_.encode(g, batch, &plans, mode);
  const std::size_t expected_tokens = cfg_.model.n_cls + plans.front().n_visible;
  if (model_.last_encoder_tokens() != expected_tokens) {
    throw ContractError("encoder saw " + std::to_string(model_.last_encoder_tokens()) + " tokens, expected " +
                        std::to_string(expected_tokens));
  }
  Var pred = model_.decode(g, latent, plans, mode);
  LossReport loss = masked_pixel_loss(g, pred, target, plans);
  model_.params().zero_grad();
  g.backward(loss.total);
  const double lr = optim_.step(model_.params(), step_);
  StepRecord rec{step_, static_cast<double>(loss.total.value().item()), lr, model_.last_encoder_tokens()};
  history_.push_back(rec);
  ++step_;
  return rec;
}

Checkpoint Pretrainer::snapshot() const {
  Checkpoint ckpt;
  cfg_.write(ckpt.config);
  ckpt.step = step_;
  ckpt.rng_state = rng_.state();
  pack_state(ckpt, model_.params(), &optim_);
  return ckpt;
}

void Pretrainer::restore(const Checkpoint& ckpt) {
  check_model_config(ckpt, cfg_.model, "model.");
  unpack_state(ckpt, model_.params(), &optim_);
  rng_.set_state(ckpt.rng_state);
  step_ = ckpt.step;
  history_.clear();
}

double Pretrainer::evaluate(const std::vector<Image>& images, std::uint64_t seed) const {
  if (images.empty()) throw ContractError("evaluate: no images");
  ImageBatch batch = eval_batch(images, cfg_.model.input_size);
  PatchGrid target = patchify(batch, cfg_.model.patch);
  if (cfg_.norm_target) target = normalize_target(target);
  Rng rng = Rng::derive(seed, {kEvalStream});
  const auto plans = sample_batch_masks(cfg_.mask_config(), batch.batch(), rng);
  Graph g(false);
  TokenStates latent = model_.encode(g, batch, &plans);
  Var pred = model_.decode(g, latent, plans);
  return static_cast<double>(masked_pixel_loss(g, pred, target, plans).total.value().item());
}

void write_metrics(const fs::path& path, const std::vector<StepRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& r : history) {
    out << r.step << '\t' << format_double(r.loss) << '\t' << format_double(r.lr) << '\n';
  }
}

namespace {

template <typename Trainer>
RunResult run_loop(Trainer& trainer, const KeyValues& resolved, std::size_t checkpoint_every, const fs::path& out_dir,
                   const std::function<void(const StepRecord&)>& on_step) {
  fs::create_directories(out_dir);
  resolved.save(out_dir / "config.cfg");
  fs::path last_good;
  while (!trainer.finished()) {
    try {
      const StepRecord rec = trainer.step();
      if (on_step) on_step(rec);
    } catch (const NumericError& e) {
      write_metrics(out_dir / "metrics.tsv", trainer.history());
      throw TrainingError(std::string("training halted at step ") + std::to_string(trainer.steps_done()) + ": " +
                              e.what() + (last_good.empty() ? "" : "; last good checkpoint " + last_good.string()),
                          last_good);
    }
    if (checkpoint_every && trainer.steps_done() % checkpoint_every == 0 && !trainer.finished()) {
      std::ostringstream name;
      name << "ckpt-" << std::setw(6) << std::setfill('0') << trainer.steps_done() << ".bin";
      last_good = out_dir / name.str();
      save_checkpoint(last_good, trainer.snapshot());
    }
  }
  RunResult result;
  result.history = trainer.history();
  result.checkpoint = out_dir / "checkpoint.bin";
  save_checkpoint(result.checkpoint, trainer.snapshot());
  write_metrics(out_dir / "metrics.tsv", result.history);
  return result;
}

}  // namespace

RunResult pretrain(const PretrainConfig& cfg, const Corpus& corpus, const fs::path& out_dir,
                   const std::function<void(const StepRecord&)>& on_step) {
  Pretrainer trainer(cfg, corpus);
  KeyValues resolved;
  trainer.config().write(resolved);
  fs::create_directories(out_dir);
  write_corpus_manifest(out_dir / "corpus.manifest", corpus);
  return run_loop(trainer, resolved, cfg.checkpoint_every, out_dir, on_step);
}

DistillConfig DistillConfig::for_student(const ModelConfig& student, const OptimConfig& optim) {
  DistillConfig c;
  c.student = student;
  c.optim = optim;
  const bool capable = student.enc_dim >= 384;
  c.student_masked = capable;
  c.student.drop_path_rate = capable ? 0.4 : 0.1;
  return c;
}

MaskConfig DistillConfig::mask_config() const {
  return MaskConfig{mask_ratio, mask_granularity, student.grid(), student.grid()};
}

void DistillConfig::write(KeyValues& kv) const {
  kv.set("command", "distill");
  student.write(kv);
  optim.write(kv);
  kv.set("student_masked", student_masked);
  kv.set("mask.ratio", mask_ratio);
  kv.set("mask.granularity", mask_granularity);
  write_augment(kv, augment);
  kv.set("seed", static_cast<long long>(seed));
  kv.set("checkpoint_every", checkpoint_every);
}

DistillConfig DistillConfig::read(const KeyValues& kv) {
  DistillConfig c = for_student(ModelConfig::read(kv), OptimConfig::read(kv));
  if (kv.has("model.drop_path_rate")) c.student.drop_path_rate = kv.get_double("model.drop_path_rate", 0.1);
  c.student_masked = kv.get_bool("student_masked", c.student_masked);
  c.mask_ratio = kv.get_double("mask.ratio", c.mask_ratio);
  c.mask_granularity = kv.get_size("mask.granularity", c.mask_granularity);
  c.augment = read_augment(kv, c.student.input_size);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  c.checkpoint_every = kv.get_size("checkpoint_every", 0);
  return c;
}

namespace {

PixioModel make_student(const PixioModel& teacher, const DistillConfig& cfg) {
  if (cfg.student.input_size != teacher.config().input_size || cfg.student.patch != teacher.config().patch) {
    throw ConfigError("student and teacher must share input size and patch size");
  }
  if (cfg.student.n_cls != teacher.config().n_cls) {
    throw ConfigError("student and teacher must have the same number of class tokens");
  }
  return PixioModel(cfg.student, cfg.seed ^ 0x57d7ULL);
}

}  // namespace

Distiller::Distiller(const PixioModel& teacher, const DistillConfig& cfg, const Corpus& corpus)
    : teacher_(&teacher),
      cfg_(cfg),
      corpus_(&corpus),
      student_(make_student(teacher, cfg)),
      head_(ProjectionHead::create(student_.params(), "distill_head", cfg.student.enc_dim, teacher.config().enc_dim,
                                   cfg.seed)),
      optim_(student_.params(), cfg.optim),
      rng_(cfg.seed) {
  cfg_.augment.output_size = cfg_.student.input_size;
  cfg_.optim.validate();
  cfg_.augment.validate();
  if (cfg_.student_masked) cfg_.mask_config().validate();
  if (corpus.size() == 0) throw ContractError("distill: empty corpus");
}

void Distiller::copy_student_from(const ParamStore& params) {
  for (const auto& e : params.entries()) {
    if (!student_.params().contains(e.name)) continue;
    Var dst = student_.params().get(e.name);
    if (!dst.value().same_shape(e.var.value())) throw ContractError("copy_student_from: shape mismatch at " + e.name);
    dst.mutable_value() = e.var.value();
  }
}

ImageBatch Distiller::sample_batch(Rng& rng) const {
  const auto idx = batch_indices(cfg_.seed, corpus_->size(), cfg_.optim.batch_size, step_);
  return augment_batch(*corpus_, idx, cfg_.augment, rng);
}

StepRecord Distiller::step() {
  ImageBatch batch = sample_batch(rng_);
  Graph frozen(false);
  TokenStates t = teacher_->encode(frozen, batch, nullptr);
  TokenStates teacher{Var::constant(t.cls.value()), Var::constant(t.patches.value()), TokenLayout::Full};

  std::vector<MaskPlan> plans;
  if (cfg_.student_masked) plans = sample_batch_masks(cfg_.mask_config(), batch.batch(), rng_);
  Graph g;
  ForwardMode mode{true, &rng_};
  TokenStates s = student_.encode(g, batch, cfg_.student_masked ? &plans : nullptr, mode);
  Var loss = distill_loss(g, teacher, s, head_, cfg_.student_masked ? &plans : nullptr);
  student_.params().zero_grad();
  g.backward(loss);
  const double lr = optim_.step(student_.params(), step_);
  StepRecord rec{step_, static_cast<double>(loss.value().item()), lr, student_.last_encoder_tokens()};
  history_.push_back(rec);
  ++step_;
  return rec;
}

double Distiller::evaluate(const std::vector<Image>& images, std::uint64_t seed) const {
  ImageBatch batch = eval_batch(images, cfg_.student.input_size);
  Graph g(false);
  TokenStates teacher = teacher_->encode(g, batch, nullptr);
  std::vector<MaskPlan> plans;
  if (cfg_.student_masked) {
    Rng rng = Rng::derive(seed, {kEvalStream});
    plans = sample_batch_masks(cfg_.mask_config(), batch.batch(), rng);
  }
  TokenStates s = student_.encode(g, batch, cfg_.student_masked ? &plans : nullptr);
  return static_cast<double>(distill_loss(g, teacher, s, head_, cfg_.student_masked ? &plans : nullptr).value().item());
}

Checkpoint Distiller::snapshot() const {
  Checkpoint ckpt;
  cfg_.write(ckpt.config);
  ckpt.step = step_;
  ckpt.rng_state = rng_.state();
  pack_state(ckpt, student_.params(), &optim_);
  return ckpt;
}

void Distiller::restore(const Checkpoint& ckpt) {
  check_model_config(ckpt, cfg_.student, "model.");
  unpack_state(ckpt, student_.params(), &optim_);
  rng_.set_state(ckpt.rng_state);
  step_ = ckpt.step;
  history_.clear();
}

RunResult distill(const PixioModel& teacher, const DistillConfig& cfg, const Corpus& corpus, const fs::path& out_dir,
                  const std::function<void(const StepRecord&)>& on_step) {
  Distiller trainer(teacher, cfg, corpus);
  KeyValues resolved;
  trainer.config().write(resolved);
  teacher.config().write(resolved, "teacher.");
  return run_loop(trainer, resolved, cfg.checkpoint_every, out_dir, on_step);
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
