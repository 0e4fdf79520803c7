#include "pixio/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pixio/ops.hpp"
#include "pixio/optim.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

namespace {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatR = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::uint64_t kSplitStream = 0x5b1;
constexpr std::uint64_t kDemoStream = 0xde70;
constexpr double kDepthFloor = 1e-3;

MatD to_matrix(const Tensor& t) {
  if (t.rank() != 2) throw ContractError("expected a [N, D] matrix, got " + shape_str(t.shape()));
  return Eigen::Map<const MatR>(t.data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)))
      .cast<double>();
}

Tensor from_matrix(const MatD& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  Eigen::Map<MatR>(t.data(), m.rows(), m.cols()) = m.cast<real>();
  return t;
}

MatD normalized_rows(const Tensor& t, const char* what) {
  MatD m = to_matrix(t);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw ContractError(std::string("knn: zero or non-finite ") + what + " feature");
    m.row(r) /= n;
  }
  return m;
}

ImageBatch centre_batch(const std::vector<Image>& images, std::size_t begin, std::size_t end, std::size_t size) {
  std::vector<Tensor> crops;
  for (std::size_t i = begin; i < end; ++i) crops.push_back(center_crop_resize(images[i], size));
  return stack_images(crops, {});
}

}  // namespace

std::string feature_source_name(FeatureSource source) {
  return source == FeatureSource::ClsMean ? "cls-mean" : "patch-concat-cls";
}

FeatureSource parse_feature_source(const std::string& name) {
  if (name == "cls-mean") return FeatureSource::ClsMean;
  if (name == "patch-concat-cls") return FeatureSource::PatchConcatCls;
  throw ConfigError("unknown feature source '" + name + "' (expected cls-mean or patch-concat-cls)");
}

void KnnConfig::validate() const {
  if (k < 1) throw ConfigError("knn k must be at least 1");
  if (!(temperature > 0.0)) throw ConfigError("knn temperature must be positive");
}

std::vector<int> knn_classify(const Tensor& train, const std::vector<int>& train_labels, const Tensor& query,
                              const KnnConfig& cfg) {
  cfg.validate();
  if (train.rank() != 2 || query.rank() != 2 || train.dim(1) != query.dim(1)) {
    throw ContractError("knn: feature shapes " + shape_str(train.shape()) + " and " + shape_str(query.shape()) +
                        " are incompatible");
  }
  const std::size_t n = train.dim(0);
  if (train_labels.size() != n) throw ContractError("knn: one label per training row required");
  if (cfg.k > n) {
    throw ConfigError("knn: k = " + std::to_string(cfg.k) + " exceeds the training set size " + std::to_string(n));
  }
  int classes = 0;
  for (int l : train_labels) {
    if (l < 0) throw ContractError("knn: labels must be non-negative");
    classes = std::max(classes, l + 1);
  }
  const MatD a = normalized_rows(train, "training");
  const MatD q = normalized_rows(query, "query");
  const MatD sims = q * a.transpose();

  std::vector<int> out(query.dim(0));
  std::vector<std::size_t> order(n);
  std::vector<double> votes(static_cast<std::size_t>(classes));
  for (Eigen::Index r = 0; r < sims.rows(); ++r) {
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.k), order.end(),
                      [&](std::size_t x, std::size_t y) {
                        const double sx = sims(r, static_cast<Eigen::Index>(x));
                        const double sy = sims(r, static_cast<Eigen::Index>(y));
                        return sx != sy ? sx > sy : x < y;
                      });
    std::fill(votes.begin(), votes.end(), 0.0);
    for (std::size_t j = 0; j < cfg.k; ++j) {
      const std::size_t i = order[j];
      votes[static_cast<std::size_t>(train_labels[i])] +=
          std::exp(sims(r, static_cast<Eigen::Index>(i)) / cfg.temperature);
    }
    out[static_cast<std::size_t>(r)] =
        static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw ContractError("accuracy: size mismatch or empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double delta1(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || truth.empty()) throw ContractError("delta1: size mismatch or empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!(pred[i] > 0.0) || !(truth[i] > 0.0)) throw ContractError("delta1: depths must be strictly positive");
    hit += std::max(pred[i] / truth[i], truth[i] / pred[i]) < 1.25;
  }
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || truth.empty()) throw ContractError("rmse: size mismatch or empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) acc += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(acc / static_cast<double>(truth.size()));
}

void ProbeConfig::validate() const {
  if (epochs < 2) throw ConfigError("probe needs at least 2 epochs");
  if (!(lr > 0.0)) throw ConfigError("probe lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("probe weight decay must be non-negative");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("probe train fraction must lie in (0, 1)");
}

Split split_indices(std::size_t n, double train_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive(seed, {kSplitStream});
  rng.shuffle(order);
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n > 1 ? n - 1 : 1);
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Tensor take_rows(const Tensor& rows, const std::vector<std::size_t>& index) {
  const std::size_t d = rows.cols();
  Tensor out({index.size(), d});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows.rows()) throw ContractError("take_rows: index out of range");
    std::copy_n(rows.data() + index[i] * d, d, out.data() + i * d);
  }
  return out;
}

LinearProbe::LinearProbe(ProbeTask task, std::size_t in_dim, std::size_t out_dim)
    : task_(task), in_(in_dim), out_(out_dim), weight_({in_dim, out_dim}), bias_({out_dim}) {
  if (in_dim == 0 || out_dim == 0) throw ContractError("probe dimensions must be positive");
}

void LinearProbe::fit(const Tensor& features, const Tensor& targets, const ProbeConfig& cfg) {
  cfg.validate();
  MatD x = to_matrix(features);
  MatD y = to_matrix(targets);
  const auto n = x.rows();
  if (static_cast<std::size_t>(x.cols()) != in_ || y.rows() != n) throw ContractError("probe: shape mismatch");
  if (task_ == ProbeTask::Classify && static_cast<std::size_t>(y.cols()) != out_) {
    throw ContractError("probe: one-hot width mismatch");
  }

  auto standardize = [n](MatD& m, std::vector<double>& mean, std::vector<double>& scale) {
    mean.assign(static_cast<std::size_t>(m.cols()), 0.0);
    scale.assign(static_cast<std::size_t>(m.cols()), 1.0);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double mu = m.col(c).mean();
      const double sd = std::sqrt((m.col(c).array() - mu).square().sum() / static_cast<double>(n));
      mean[static_cast<std::size_t>(c)] = mu;
      scale[static_cast<std::size_t>(c)] = sd > 1e-12 ? sd : 1.0;
      m.col(c) = (m.col(c).array() - mu) / scale[static_cast<std::size_t>(c)];
    }
  };
  standardize(x, feat_mean_, feat_scale_);
  if (task_ == ProbeTask::Regress) standardize(y, target_mean_, target_scale_);

  ParamStore store;
  Var w = store.add("probe.weight", Tensor({in_, out_}), true);
  Var b = store.add("probe.bias", Tensor({out_}), false);
  OptimConfig oc;
  oc.peak_lr = cfg.lr;
  oc.total_steps = cfg.epochs;
  oc.warmup_steps = std::max<std::size_t>(1, cfg.epochs / 10);
  oc.weight_decay = cfg.weight_decay;
  oc.batch_size = static_cast<std::size_t>(n);
  AdamW optim(store, oc);

  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t step = 0; step < cfg.epochs; ++step) {
    const MatD wm = to_matrix(w.value());
    Eigen::RowVectorXd bv(static_cast<Eigen::Index>(out_));
    for (std::size_t j = 0; j < out_; ++j) bv(static_cast<Eigen::Index>(j)) = b.value()[j];
    MatD residual = (x * wm).rowwise() + bv;
    if (task_ == ProbeTask::Classify) {
      for (Eigen::Index r = 0; r < n; ++r) {
        const double mx = residual.row(r).maxCoeff();
        residual.row(r) = (residual.row(r).array() - mx).exp();
        residual.row(r) /= residual.row(r).sum();
      }
    }
    residual -= y;
    const MatD gw = x.transpose() * residual * inv_n;
    const Eigen::RowVectorXd gb = residual.colwise().sum() * inv_n;
    Tensor& gwt = w.grad_buffer();
    Eigen::Map<MatR>(gwt.data(), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(out_)) = gw.cast<real>();
    Tensor& gbt = b.grad_buffer();
    for (std::size_t j = 0; j < out_; ++j) gbt[j] = static_cast<real>(gb(static_cast<Eigen::Index>(j)));
    optim.step(store, step);
  }
  weight_ = w.value();
  bias_ = b.value();
}

Tensor LinearProbe::predict(const Tensor& features) const {
  MatD x = to_matrix(features);
  if (static_cast<std::size_t>(x.cols()) != in_) throw ContractError("probe: feature width mismatch");
  if (feat_mean_.empty()) throw ContractError("probe: predict before fit");
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    x.col(c) = (x.col(c).array() - feat_mean_[static_cast<std::size_t>(c)]) / feat_scale_[static_cast<std::size_t>(c)];
  }
  MatD out = x * to_matrix(weight_);
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    out.col(j).array() += static_cast<double>(bias_[static_cast<std::size_t>(j)]);
    if (task_ == ProbeTask::Regress) {
      out.col(j) = out.col(j).array() * target_scale_[static_cast<std::size_t>(j)] +
                   target_mean_[static_cast<std::size_t>(j)];
    }
  }
  return from_matrix(out);
}

std::vector<int> LinearProbe::classify(const Tensor& features) const {
  const MatD scores = to_matrix(predict(features));
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index arg = 0;
    scores.row(r).maxCoeff(&arg);
    out[static_cast<std::size_t>(r)] = static_cast<int>(arg);
  }
  return out;
}

ProbeMetrics linear_probe_classify(const Tensor& features, const std::vector<int>& labels, const ProbeConfig& cfg) {
  if (features.rank() != 2 || labels.size() != features.dim(0)) throw ContractError("probe: one label per row required");
  int classes = 0;
  for (int l : labels) {
    if (l < 0) throw ContractError("probe: labels must be non-negative");
    classes = std::max(classes, l + 1);
  }
  if (std::adjacent_find(labels.begin(), labels.end(), std::not_equal_to<>()) == labels.end()) {
    throw ContractError("probe: classification needs at least two classes");
  }
  const Split s = split_indices(labels.size(), cfg.train_fraction, cfg.seed);
  Tensor onehot({s.train.size(), static_cast<std::size_t>(classes)});
  std::vector<int> test_labels;
  for (std::size_t i = 0; i < s.train.size(); ++i) {
    onehot[i * static_cast<std::size_t>(classes) + static_cast<std::size_t>(labels[s.train[i]])] = real(1);
  }
  for (auto i : s.test) test_labels.push_back(labels[i]);
  LinearProbe probe(ProbeTask::Classify, features.dim(1), static_cast<std::size_t>(classes));
  probe.fit(take_rows(features, s.train), onehot, cfg);
  ProbeMetrics m;
  m.task = ProbeTask::Classify;
  m.accuracy = accuracy(probe.classify(take_rows(features, s.test)), test_labels);
  return m;
}

namespace {

ProbeMetrics regress_split(const Tensor& train_x, const Tensor& train_y, const Tensor& test_x, const Tensor& test_y,
                           const ProbeConfig& cfg) {
  LinearProbe probe(ProbeTask::Regress, train_x.dim(1), train_y.dim(1));
  probe.fit(train_x, train_y, cfg);
  const Tensor pred = probe.predict(test_x);
  std::vector<double> p(pred.values().begin(), pred.values().end());
  std::vector<double> t(test_y.values().begin(), test_y.values().end());
  ProbeMetrics m;
  m.task = ProbeTask::Regress;
  m.rmse = rmse(p, t);
  if (std::all_of(t.begin(), t.end(), [](double v) { return v > 0.0; })) {
    for (auto& v : p) v = std::max(v, kDepthFloor);
    m.delta1 = delta1(p, t);
  }
  return m;
}

}  // namespace

ProbeMetrics linear_probe_regress(const Tensor& features, const Tensor& targets, const ProbeConfig& cfg) {
  if (features.rank() != 2 || targets.rank() != 2 || targets.dim(0) != features.dim(0)) {
    throw ContractError("probe: targets must be [N, T] with one row per feature row");
  }
  const Split s = split_indices(features.dim(0), cfg.train_fraction, cfg.seed);
  return regress_split(take_rows(features, s.train), take_rows(targets, s.train), take_rows(features, s.test),
                       take_rows(targets, s.test), cfg);
}

Tensor extract_features(const PixioModel& model, const std::vector<Image>& images, std::size_t block_index,
                        FeatureSource source, std::size_t batch) {
  if (images.empty()) throw ContractError("extract_features: no images");
  const std::size_t d = model.config().enc_dim * (source == FeatureSource::PatchConcatCls ? 2 : 1);
  Tensor out({images.size(), d});
  for (std::size_t begin = 0; begin < images.size(); begin += batch) {
    const std::size_t end = std::min(images.size(), begin + batch);
    Graph g(false);
    TokenStates t = model.forward_features(g, centre_batch(images, begin, end, model.config().input_size), block_index);
    Var feat = global_embedding(g, t);
    if (source == FeatureSource::PatchConcatCls) {
      feat = concat_features(g, mean_tokens(g, t.patches, 0, t.patch_tokens()), feat);
    }
    std::copy(feat.value().values().begin(), feat.value().values().end(), out.data() + begin * d);
  }
  return out;
}

Tensor extract_patch_features(const PixioModel& model, const std::vector<Image>& images, std::size_t block_index,
                              std::size_t batch) {
  if (images.empty()) throw ContractError("extract_patch_features: no images");
  const std::size_t n = model.config().num_patches();
  const std::size_t d = model.config().enc_dim;
  Tensor out({images.size() * n, d});
  for (std::size_t begin = 0; begin < images.size(); begin += batch) {
    const std::size_t end = std::min(images.size(), begin + batch);
    Graph g(false);
    TokenStates t = model.forward_features(g, centre_batch(images, begin, end, model.config().input_size), block_index);
    std::copy(t.patches.value().values().begin(), t.patches.value().values().end(), out.data() + begin * n * d);
  }
  return out;
}

std::vector<double> patch_depths(const std::vector<real>& depth, std::size_t size, std::size_t patch) {
  if (depth.size() != size * size) throw ContractError("patch_depths: depth map does not match the input size");
  if (patch == 0 || size % patch != 0) throw ContractError("patch_depths: size not divisible by patch");
  const std::size_t grid = size / patch;
  std::vector<double> out(grid * grid, 0.0);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) out[(y / patch) * grid + x / patch] += depth[y * size + x];
  }
  for (auto& v : out) v /= static_cast<double>(patch * patch);
  return out;
}

ProbeDataset scene_dataset(std::uint64_t seed, std::size_t count, std::size_t size) {
  ProbeDataset d;
  for (std::size_t i = 0; i < count; ++i) {
    Scene s = render_scene(Rng::derive(seed, {0x5ce4e, i}).next_u64(), size, static_cast<int>(i % kSceneClasses));
    d.images.push_back(std::move(s.image));
    d.labels.push_back(s.label);
    d.depths.push_back(std::move(s.depth));
  }
  return d;
}

ProbeMetrics run_probe(const PixioModel& model, const ProbeDataset& data, std::size_t block_index,
                       const ProbeSpec& spec) {
  ProbeMetrics m;
  switch (spec.kind) {
    case ProbeKind::Knn: {
      if (data.labels.size() != data.images.size()) throw ContractError("knn probe needs one label per image");
      const Tensor feats = extract_features(model, data.images, block_index, spec.source);
      const Split s = split_indices(data.images.size(), spec.probe.train_fraction, spec.probe.seed);
      std::vector<int> train_labels, test_labels;
      for (auto i : s.train) train_labels.push_back(data.labels[i]);
      for (auto i : s.test) test_labels.push_back(data.labels[i]);
      const auto pred = knn_classify(take_rows(feats, s.train), train_labels, take_rows(feats, s.test), spec.knn);
      m.task = ProbeTask::Classify;
      m.accuracy = accuracy(pred, test_labels);
      break;
    }
    case ProbeKind::Linear: {
      if (data.labels.size() != data.images.size()) throw ContractError("linear probe needs one label per image");
      m = linear_probe_classify(extract_features(model, data.images, block_index, spec.source), data.labels,
                                spec.probe);
      break;
    }
    case ProbeKind::Depth: {
      if (data.depths.size() != data.images.size()) throw ContractError("depth probe needs one depth map per image");
      const ModelConfig& mc = model.config();
      const std::size_t n = mc.num_patches();
      const Tensor feats = extract_patch_features(model, data.images, block_index);
      const Split s = split_indices(data.images.size(), spec.probe.train_fraction, spec.probe.seed);
      auto rows_for = [&](const std::vector<std::size_t>& images, Tensor& x, Tensor& y) {
        std::vector<std::size_t> rows;
        std::vector<real> depth;
        for (auto i : images) {
          const auto pd = patch_depths(data.depths[i], mc.input_size, mc.patch);
          for (std::size_t p = 0; p < n; ++p) {
            rows.push_back(i * n + p);
            depth.push_back(static_cast<real>(pd[p]));
          }
        }
        x = take_rows(feats, rows);
        y = Tensor({rows.size(), 1}, std::move(depth));
      };
      Tensor trx, try_, tex, tey;
      rows_for(s.train, trx, try_);
      rows_for(s.test, tex, tey);
      m = regress_split(trx, try_, tex, tey, spec.probe);
      break;
    }
  }
  m.block_index = block_index;
  m.feature_source = spec.source;
  return m;
}

std::vector<ProbeMetrics> blockwise_probe(const PixioModel& model, const ProbeDataset& data,
                                          const std::vector<std::size_t>& block_indices, const ProbeSpec& spec) {
  spec.knn.validate();
  spec.probe.validate();
  for (auto b : block_indices) {
    if (b < 1 || b > model.config().enc_depth) {
      throw ConfigError("block index " + std::to_string(b) + " outside [1, " +
                        std::to_string(model.config().enc_depth) + "]");
    }
  }
  std::vector<ProbeMetrics> out;
  for (auto b : block_indices) out.push_back(run_probe(model, data, b, spec));
  return out;
}

std::string probe_report_text(const std::vector<ProbeMetrics>& rows, std::size_t enc_depth) {
  std::ostringstream out;
  for (const auto& m : rows) {
    const std::string prefix = std::to_string(m.block_index) + '\t' +
                               format_double(static_cast<double>(m.block_index) / static_cast<double>(enc_depth)) +
                               '\t';
    if (m.task == ProbeTask::Classify) {
      out << prefix << "accuracy\t" << format_double(m.accuracy) << '\n';
    } else {
      out << prefix << "rmse\t" << format_double(m.rmse) << '\n';
      out << prefix << "delta1\t" << format_double(m.delta1) << '\n';
    }
  }
  return out.str();
}

void write_probe_report(const std::filesystem::path& path, const std::vector<ProbeMetrics>& rows,
                        std::size_t enc_depth) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << probe_report_text(rows, enc_depth);
}

Image Triptych::composite() const {
  const std::size_t h = truth.height, w = truth.width;
  Image out(h, 3 * w);
  const Image* panels[3] = {&masked, &reconstruction, &truth};
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      std::copy_n(panels[p]->rgb.data() + y * w * 3, w * 3, out.rgb.data() + (y * 3 * w + p * w) * 3);
    }
  }
  return out;
}

std::vector<Triptych> reconstruct_demo(const PixioModel& model, const std::vector<Image>& images, double mask_ratio,
                                       std::size_t granularity, std::uint64_t seed, bool norm_target) {
  const ModelConfig& mc = model.config();
  const MaskConfig mask{mask_ratio, granularity, mc.grid(), mc.grid()};
  mask.validate();
  std::vector<Triptych> out;
  if (images.empty()) return out;
  const ImageBatch batch = centre_batch(images, 0, images.size(), mc.input_size);
  const PatchGrid pixels = patchify(batch, mc.patch);
  PatchStats stats;
  const PatchGrid target = normalize_target(pixels, &stats);
  (void)target;
  Rng rng = Rng::derive(seed, {kDemoStream});
  const auto plans = sample_batch_masks(mask, batch.batch(), rng);

  Graph g(false);
  TokenStates latent = model.encode(g, batch, &plans);
  const Tensor pred = model.decode(g, latent, plans).value();

  const std::size_t n = pixels.count();
  const std::size_t k = pixels.tokens.cols();
  PatchGrid masked = pixels, recon = pixels;
  for (std::size_t b = 0; b < batch.batch(); ++b) {
    for (std::size_t p = 0; p < n; ++p) {
      if (!plans[b].mask[p]) continue;
      const std::size_t row = b * n + p;
      real* m = masked.tokens.data() + row * k;
      real* r = recon.tokens.data() + row * k;
      const real* q = pred.data() + row * k;
      for (std::size_t i = 0; i < k; ++i) {
        m[i] = real(0.5);
        const real v = norm_target ? q[i] * stats.std[row] + stats.mean[row] : q[i];
        r[i] = std::clamp(v, real(0), real(1));
      }
    }
  }
  const Tensor masked_chw = unpatchify(masked);
  const Tensor recon_chw = unpatchify(recon);
  const std::size_t plane = 3 * mc.input_size * mc.input_size;
  auto slice = [&](const Tensor& t, std::size_t b) {
    return Tensor({3, mc.input_size, mc.input_size},
                  std::vector<real>(t.data() + b * plane, t.data() + (b + 1) * plane));
  };
  for (std::size_t b = 0; b < batch.batch(); ++b) {
    Triptych t;
    t.masked = tensor_to_image(slice(masked_chw, b));
    t.reconstruction = tensor_to_image(slice(recon_chw, b));
    t.truth = tensor_to_image(slice(batch.data, b));
    t.plan = plans[b];
    out.push_back(std::move(t));
  }
  return out;
}

double reconstruction_mae(const Triptych& t) {
  if (t.reconstruction.rgb.size() != t.truth.rgb.size() || t.truth.rgb.empty()) {
    throw ContractError("reconstruction_mae: panel size mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < t.truth.rgb.size(); ++i) {
    acc += std::abs(static_cast<double>(t.reconstruction.rgb[i]) - static_cast<double>(t.truth.rgb[i]));
  }
  return acc / (255.0 * static_cast<double>(t.truth.rgb.size()));
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
