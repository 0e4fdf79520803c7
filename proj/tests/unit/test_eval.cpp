#include "doctest.h"

#include <cmath>
#include <numeric>
#include <filesystem>
#include <sstream>

#include "pixio/eval.hpp"

using namespace pixio;

namespace {

Tensor gaussian_rows(std::size_t n, std::size_t d, std::uint64_t seed, double shift = 0.0) {
  Rng rng(seed);
  Tensor t({n, d});
  for (auto& v : t.storage()) v = static_cast<real>(rng.normal() + shift);
  return t;
}

// two clusters on opposite sides of the origin
void clusters(std::size_t n, std::uint64_t seed, Tensor& x, std::vector<int>& y) {
  const std::size_t d = 6;
  x = Tensor({n, d});
  y.assign(n, 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    const double centre = y[i] ? 5.0 : -5.0;
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] = static_cast<real>(centre + 0.5 * rng.normal());
  }
}

ModelConfig small_cfg() {
  ModelConfig c;
  c.input_size = 16;
  c.patch = 4;
  c.enc_dim = 16;
  c.enc_depth = 3;
  c.enc_heads = 2;
  c.dec_dim = 8;
  c.dec_depth = 1;
  c.dec_heads = 2;
  c.n_cls = 2;
  return c;
}

}  // namespace

TEST_SUITE("knn") {
  TEST_CASE("a query equal to a train point takes its label with k = 1") {
    const Tensor train = gaussian_rows(20, 5, 1);
    std::vector<int> labels(20);
    for (int i = 0; i < 20; ++i) labels[i] = i % 3;
    const Tensor query = take_rows(train, {7, 13});
    CHECK(knn_classify(train, labels, query, KnnConfig{1, 0.07}) == std::vector<int>{labels[7], labels[13]});
  }

  TEST_CASE("separated Gaussian clusters are classified perfectly with k = 10") {
    Tensor tx, qx;
    std::vector<int> ty, qy;
    clusters(100, 2, tx, ty);
    clusters(50, 3, qx, qy);
    CHECK(accuracy(knn_classify(tx, ty, qx, KnnConfig{}), qy) == 1.0);
  }

  TEST_CASE("defaults and invalid settings") {
    CHECK(KnnConfig{}.k == 10);
    CHECK(KnnConfig{}.temperature == 0.07);
    const Tensor train = gaussian_rows(5, 3, 4);
    CHECK_THROWS_AS(knn_classify(train, {0, 1, 0, 1, 0}, train, KnnConfig{6, 0.07}), ConfigError);
    CHECK_THROWS_AS(KnnConfig({0, 0.07}).validate(), ConfigError);
    Tensor zero = train;
    std::fill_n(zero.data(), 3, real(0));
    CHECK_THROWS_AS(knn_classify(zero, {0, 1, 0, 1, 0}, train, KnnConfig{1, 0.07}), ContractError);
  }

  TEST_CASE("positive rescaling of every feature changes nothing") {
    const Tensor train = gaussian_rows(60, 8, 5), query = gaussian_rows(30, 8, 6);
    std::vector<int> labels(60);
    for (int i = 0; i < 60; ++i) labels[i] = (i * 7) % 4;
    Tensor st = train, sq = query;
    for (auto& v : st.storage()) v *= real(13.5);
    for (auto& v : sq.storage()) v *= real(0.02);
    CHECK(knn_classify(train, labels, query, KnnConfig{}) == knn_classify(st, labels, sq, KnnConfig{}));
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("delta1 examples") {
    CHECK(delta1({1, 2, 3}, {1, 2, 3}) == 1.0);
    CHECK(delta1({1.3, 2.6, 3.9}, {1, 2, 3}) == 0.0);
    CHECK(delta1({1.0, 1.2, 2.0}, {1, 1, 1}) == doctest::Approx(2.0 / 3));
    CHECK_THROWS_AS(delta1({1, 0}, {1, 1}), ContractError);
    CHECK_THROWS_AS(delta1({1, 1}, {1, -2}), ContractError);
  }

  TEST_CASE("delta1 and rmse are invariant to pixel permutation") {
    Rng rng(7);
    std::vector<double> p(50), t(50);
    for (int i = 0; i < 50; ++i) {
      p[i] = rng.uniform(0.5, 3.0);
      t[i] = rng.uniform(0.5, 3.0);
    }
    std::vector<std::size_t> order(50);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<double> pp(50), tt(50);
    for (int i = 0; i < 50; ++i) {
      pp[i] = p[order[i]];
      tt[i] = t[order[i]];
    }
    CHECK(delta1(pp, tt) == delta1(p, t));
    CHECK(rmse(pp, tt) == doctest::Approx(rmse(p, t)).epsilon(1e-12));
    CHECK(rmse({1, 2}, {1, 4}) == doctest::Approx(std::sqrt(2.0)));
  }
}

TEST_SUITE("linear probe") {
  TEST_CASE("realizable linear targets reach rmse below 1e-3") {
    const Tensor x = gaussian_rows(400, 6, 8);
    Tensor y({400, 2});
    for (std::size_t i = 0; i < 400; ++i) {
      y[i * 2] = static_cast<real>(0.5 * x[i * 6] - 1.5 * x[i * 6 + 3] + 12.0);
      y[i * 2 + 1] = static_cast<real>(x[i * 6 + 1] + 0.25 * x[i * 6 + 5] + 4.0);
    }
    ProbeConfig cfg;
    cfg.epochs = 3000;
    cfg.lr = 1e-2;
    const ProbeMetrics m = linear_probe_regress(x, y, cfg);
    CHECK(m.task == ProbeTask::Regress);
    CHECK(m.rmse <= 1e-3);
    CHECK(m.delta1 == 1.0);
  }

  TEST_CASE("random features against random binary labels sit at chance") {
    const Tensor x = gaussian_rows(5000, 8, 9);
    Rng rng(10);
    std::vector<int> y(5000);
    for (auto& v : y) v = static_cast<int>(rng.below(2));
    const ProbeMetrics m = linear_probe_classify(x, y, ProbeConfig{});
    CHECK(std::abs(m.accuracy - 0.5) < 0.05);
  }

  TEST_CASE("separable clusters are learned and single-class data is refused") {
    Tensor x;
    std::vector<int> y;
    clusters(200, 11, x, y);
    CHECK(linear_probe_classify(x, y, ProbeConfig{}).accuracy == 1.0);
    CHECK_THROWS_AS(linear_probe_classify(x, std::vector<int>(200, 1), ProbeConfig{}), ContractError);
  }

  TEST_CASE("split is deterministic and disjoint") {
    const Split a = split_indices(50, 0.8, 3), b = split_indices(50, 0.8, 3);
    CHECK(a.train == b.train);
    CHECK(a.train.size() == 40);
    std::vector<int> seen(50, 0);
    for (auto i : a.train) ++seen[i];
    for (auto i : a.test) ++seen[i];
    for (int s : seen) CHECK(s == 1);
  }
}

TEST_SUITE("block-wise probing") {
  TEST_CASE("one row per index; the last index equals a standalone probe; backbone untouched") {
    const PixioModel model(small_cfg(), 12);
    const ProbeDataset data = scene_dataset(13, 40, 16);
    ProbeSpec spec;
    spec.kind = ProbeKind::Linear;
    spec.probe.epochs = 20;
    const std::uint64_t before = model.params().fingerprint();
    const auto rows = blockwise_probe(model, data, {1, 2, 3}, spec);
    CHECK(rows.size() == 3);
    CHECK(rows[1].block_index == 2);
    const ProbeMetrics alone = run_probe(model, data, 3, spec);
    CHECK(rows[2].accuracy == alone.accuracy);
    CHECK(model.params().fingerprint() == before);
    CHECK_THROWS_AS(blockwise_probe(model, data, {0}, spec), ConfigError);
    CHECK_THROWS_AS(blockwise_probe(model, data, {4}, spec), ConfigError);
    for (const auto& r : rows) {
      CHECK(r.accuracy >= 0);
      CHECK(r.accuracy <= 1);
    }
  }

  TEST_CASE("depth probe reports rmse and delta1 per block") {
    const PixioModel model(small_cfg(), 14);
    const ProbeDataset data = scene_dataset(15, 12, 16);
    ProbeSpec spec;
    spec.kind = ProbeKind::Depth;
    spec.probe.epochs = 20;
    const auto rows = blockwise_probe(model, data, {1, 3}, spec);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
      CHECK(r.task == ProbeTask::Regress);
      CHECK(r.rmse >= 0);
      CHECK(r.delta1 >= 0);
      CHECK(r.delta1 <= 1);
    }
    std::istringstream report(probe_report_text(rows, 3));
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(report, line)) lines.push_back(line);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0].rfind("1\t0.333", 0) == 0);
    CHECK(lines[0].find("\trmse\t") != std::string::npos);
    CHECK(lines[3].rfind("3\t1\tdelta1\t", 0) == 0);
  }

  TEST_CASE("patch-concat-cls doubles the feature width") {
    const PixioModel model(small_cfg(), 16);
    const ProbeDataset data = scene_dataset(17, 3, 16);
    CHECK(extract_features(model, data.images, 3, FeatureSource::ClsMean).shape() == Shape{3, 16});
    CHECK(extract_features(model, data.images, 3, FeatureSource::PatchConcatCls).shape() == Shape{3, 32});
    CHECK(extract_patch_features(model, data.images, 2).shape() == Shape{3 * 16, 16});
    CHECK(parse_feature_source(feature_source_name(FeatureSource::PatchConcatCls)) == FeatureSource::PatchConcatCls);
    CHECK(feature_source_name(FeatureSource::ClsMean) == "cls-mean");
  }
}

TEST_SUITE("reconstruction demo") {
  TEST_CASE("visible patches are pasted byte for byte and masked ones are gray") {
    const PixioModel model(small_cfg(), 18);
    const ProbeDataset data = scene_dataset(19, 2, 16);
    const auto demo = reconstruct_demo(model, data.images, 0.75, 1, 5);
    REQUIRE(demo.size() == 2);
    for (const auto& t : demo) {
      CHECK(t.truth == data.images[&t - demo.data()]);
      for (std::size_t p = 0; p < 16; ++p) {
        const std::size_t py = p / 4 * 4, px = p % 4 * 4;
        for (std::size_t y = py; y < py + 4; ++y) {
          for (std::size_t x = px; x < px + 4; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
              if (t.plan.mask[p]) {
                CHECK(t.masked.at(y, x, c) == 128);
              } else {
                CHECK(t.reconstruction.at(y, x, c) == t.truth.at(y, x, c));
                CHECK(t.masked.at(y, x, c) == t.truth.at(y, x, c));
              }
            }
          }
        }
      }
      CHECK(t.composite().width == 48);
      CHECK(reconstruction_mae(t) >= 0);
    }
  }

  TEST_CASE("fixed seed gives identical triptychs") {
    const PixioModel model(small_cfg(), 20);
    const ProbeDataset data = scene_dataset(21, 2, 16);
    const auto a = reconstruct_demo(model, data.images, 0.5, 2, 9);
    const auto b = reconstruct_demo(model, data.images, 0.5, 2, 9);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(a[i].reconstruction == b[i].reconstruction);
      CHECK(a[i].plan.mask == b[i].plan.mask);
    }
  }
}
