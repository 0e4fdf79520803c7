#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pixio/checkpoint.hpp"
#include "pixio/data.hpp"
#include "pixio/masking.hpp"
#include "pixio/model.hpp"
#include "pixio/objective.hpp"
#include "pixio/optim.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

/// Training stopped on a non-finite loss or gradient.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::filesystem::path last_good)
      : std::runtime_error(what), last_good_checkpoint(std::move(last_good)) {}
  std::filesystem::path last_good_checkpoint;
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::size_t encoder_tokens = 0;
};

struct PretrainConfig {
  ModelConfig model;
  OptimConfig optim;
  double mask_ratio = 0.75;
  std::size_t mask_granularity = 2;
  AugmentConfig augment;
  bool norm_target = true;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only

  MaskConfig mask_config() const;
  void validate() const;
  void write(KeyValues& kv) const;
  static PretrainConfig read(const KeyValues& kv);
};

/// Samples `batch` corpus indices for `step` from per-epoch permutations, so
/// batch composition is a pure function of (seed, step).
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t corpus_size, std::size_t batch,
                                       std::size_t step);

/// Masked-reconstruction pre-training loop, one step at a time.
class Pretrainer {
 public:
  /// `corpus` is referenced, not copied, and must outlive the trainer.
  Pretrainer(const PretrainConfig& cfg, const Corpus& corpus);

  /// sample batch -> augment -> patchify -> mask -> encode -> decode -> loss
  /// -> backward -> AdamW.
  StepRecord step();
  std::size_t steps_done() const { return step_; }
  bool finished() const { return step_ >= cfg_.optim.total_steps; }
  const std::vector<StepRecord>& history() const { return history_; }

  const PretrainConfig& config() const { return cfg_; }
  const PixioModel& model() const { return model_; }
  PixioModel& model() { return model_; }

  Checkpoint snapshot() const;
  /// Resumes from `ckpt`; the model configuration must match.
  void restore(const Checkpoint& ckpt);

  /// Mean masked loss on the given images (centre crop, fixed masks from
  /// `seed`, eval mode).
  double evaluate(const std::vector<Image>& images, std::uint64_t seed) const;

 private:
  PretrainConfig cfg_;
  const Corpus* corpus_;
  PixioModel model_;
  AdamW optim_;
  Rng rng_;
  std::size_t step_ = 0;
  std::vector<StepRecord> history_;
};

struct RunResult {
  std::vector<StepRecord> history;
  std::filesystem::path checkpoint;
};

/// Runs the full pre-training loop, writing into `out_dir`: config.cfg,
/// metrics.tsv (`step<TAB>loss<TAB>lr`), corpus.manifest, checkpoint.bin and
/// ckpt-<step>.bin every `checkpoint_every` steps.
RunResult pretrain(const PretrainConfig& cfg, const Corpus& corpus, const std::filesystem::path& out_dir,
                   const std::function<void(const StepRecord&)>& on_step = {});

struct DistillConfig {
  ModelConfig student;
  OptimConfig optim;
  bool student_masked = false;
  double mask_ratio = 0.5;
  std::size_t mask_granularity = 4;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;

  /// Students with encoder width >= 384 count as capable: masked input and
  /// drop path 0.4; smaller ones see the full image with drop path 0.1.
  static DistillConfig for_student(const ModelConfig& student, const OptimConfig& optim);
  MaskConfig mask_config() const;
  void write(KeyValues& kv) const;
  static DistillConfig read(const KeyValues& kv);
};

/// Feature distillation from a frozen teacher encoder into a student encoder
/// through a projection head.
class Distiller {
 public:
  /// `teacher` and `corpus` are referenced and must outlive the distiller.
  Distiller(const PixioModel& teacher, const DistillConfig& cfg, const Corpus& corpus);

  /// Initializes the student encoder from `params` (names and shapes must match).
  void copy_student_from(const ParamStore& params);
  StepRecord step();
  std::size_t steps_done() const { return step_; }
  bool finished() const { return step_ >= cfg_.optim.total_steps; }
  const std::vector<StepRecord>& history() const { return history_; }
  const PixioModel& student() const { return student_; }
  const DistillConfig& config() const { return cfg_; }

  /// Eval-mode distillation loss on centre crops of `images`.
  double evaluate(const std::vector<Image>& images, std::uint64_t seed) const;
  Checkpoint snapshot() const;
  void restore(const Checkpoint& ckpt);

 private:
  ImageBatch sample_batch(Rng& rng) const;

  const PixioModel* teacher_;
  DistillConfig cfg_;
  const Corpus* corpus_;
  PixioModel student_;
  ProjectionHead head_;
  AdamW optim_;
  Rng rng_;
  std::size_t step_ = 0;
  std::vector<StepRecord> history_;
};

RunResult distill(const PixioModel& teacher, const DistillConfig& cfg, const Corpus& corpus,
                  const std::filesystem::path& out_dir, const std::function<void(const StepRecord&)>& on_step = {});

void write_metrics(const std::filesystem::path& path, const std::vector<StepRecord>& history);

}  // namespace pixio::inline PIXIO_PRECISION_NS
