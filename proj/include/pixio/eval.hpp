#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pixio/data.hpp"
#include "pixio/masking.hpp"
#include "pixio/model.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

enum class FeatureSource { ClsMean, PatchConcatCls };
std::string feature_source_name(FeatureSource source);
FeatureSource parse_feature_source(const std::string& name);

struct KnnConfig {
  std::size_t k = 10;
  double temperature = 0.07;
  void validate() const;
};

/// Cosine top-k vote weighted by exp(sim / temperature). Rows are samples.
std::vector<int> knn_classify(const Tensor& train, const std::vector<int>& train_labels, const Tensor& query,
                              const KnnConfig& cfg);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);
/// Fraction of entries with max(pred/true, true/pred) < 1.25.
double delta1(const std::vector<double>& pred, const std::vector<double>& truth);
double rmse(const std::vector<double>& pred, const std::vector<double>& truth);

enum class ProbeTask { Classify, Regress };

struct ProbeConfig {
  std::size_t epochs = 100;  // full-batch AdamW steps
  double lr = 1e-3;
  double weight_decay = 0.0;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  void validate() const;
};

struct ProbeMetrics {
  ProbeTask task = ProbeTask::Classify;
  double accuracy = 0.0;
  double rmse = 0.0;
  double delta1 = 0.0;
  std::size_t block_index = 0;
  FeatureSource feature_source = FeatureSource::ClsMean;
};

/// Deterministic train/test split of n rows.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
Split split_indices(std::size_t n, double train_fraction, std::uint64_t seed);
Tensor take_rows(const Tensor& rows, const std::vector<std::size_t>& index);

/// Linear map plus bias trained with AdamW on standardized features.
class LinearProbe {
 public:
  LinearProbe(ProbeTask task, std::size_t in_dim, std::size_t out_dim);
  void fit(const Tensor& features, const Tensor& targets, const ProbeConfig& cfg);
  /// Scores [N, out] (logits or regression values).
  Tensor predict(const Tensor& features) const;
  std::vector<int> classify(const Tensor& features) const;

 private:
  ProbeTask task_;
  std::size_t in_, out_;
  std::vector<double> feat_mean_, feat_scale_, target_mean_, target_scale_;
  Tensor weight_, bias_;
};

/// Classification probe; labels in [0, classes). Reports held-out accuracy.
ProbeMetrics linear_probe_classify(const Tensor& features, const std::vector<int>& labels, const ProbeConfig& cfg);
/// Regression probe on [N, T] targets. Reports held-out rmse, and delta1 when
/// every target is positive (predictions are clamped to a small positive floor).
ProbeMetrics linear_probe_regress(const Tensor& features, const Tensor& targets, const ProbeConfig& cfg);

/// One global feature row per image, from the normed states after encoder
/// block `block_index` (1-based). Images are centre-cropped to the input size.
Tensor extract_features(const PixioModel& model, const std::vector<Image>& images, std::size_t block_index,
                        FeatureSource source, std::size_t batch = 64);
/// One row per patch token: [images * patches, D].
Tensor extract_patch_features(const PixioModel& model, const std::vector<Image>& images, std::size_t block_index,
                              std::size_t batch = 64);
/// Mean depth over each patch of a square depth map of the model input size.
std::vector<double> patch_depths(const std::vector<real>& depth, std::size_t size, std::size_t patch);

struct ProbeDataset {
  std::vector<Image> images;
  std::vector<int> labels;                // classification / k-NN
  std::vector<std::vector<real>> depths;  // dense depth, one map per image
};

/// Procedural scenes at `size` with labels and depth maps.
ProbeDataset scene_dataset(std::uint64_t seed, std::size_t count, std::size_t size);

enum class ProbeKind { Knn, Linear, Depth };

struct ProbeSpec {
  ProbeKind kind = ProbeKind::Knn;
  FeatureSource source = FeatureSource::ClsMean;
  KnnConfig knn;
  ProbeConfig probe;
};

/// Probes the frozen features after each listed block, one result per index.
std::vector<ProbeMetrics> blockwise_probe(const PixioModel& model, const ProbeDataset& data,
                                          const std::vector<std::size_t>& block_indices, const ProbeSpec& spec);
ProbeMetrics run_probe(const PixioModel& model, const ProbeDataset& data, std::size_t block_index,
                       const ProbeSpec& spec);

/// `block_index<TAB>relative_depth<TAB>metric_name<TAB>value`.
void write_probe_report(const std::filesystem::path& path, const std::vector<ProbeMetrics>& rows,
                        std::size_t enc_depth);
std::string probe_report_text(const std::vector<ProbeMetrics>& rows, std::size_t enc_depth);

struct Triptych {
  Image masked;
  Image reconstruction;
  Image truth;
  MaskPlan plan;
  Image composite() const;  // panels side by side
};

/// Masked input with gray patches, reconstruction with visible patches pasted
/// from the input, and ground truth. Predictions are un-normalized with the
/// per-patch target statistics when the model was trained on normalized
/// targets.
std::vector<Triptych> reconstruct_demo(const PixioModel& model, const std::vector<Image>& images,
                                       double mask_ratio, std::size_t granularity, std::uint64_t seed,
                                       bool norm_target = true);
/// Mean absolute error over all pixels between reconstruction and truth, in [0, 1] units.
double reconstruction_mae(const Triptych& t);

}  // namespace pixio::inline PIXIO_PRECISION_NS
