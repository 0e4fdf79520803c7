// Acceptance gate. Each criterion prints detail lines indented by two spaces
// and exactly one verdict line: "PASS <n> <title>: ..." or "FAIL <n> ...".

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pixio/cli.hpp"
#include "pixio/curation.hpp"
#include "pixio/eval.hpp"
#include "pixio/gradcheck.hpp"
#include "pixio/trainer.hpp"

using namespace pixio;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string summary;
};

class Clock {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

void detail(const std::string& line) { std::cout << "  " << line << '\n' << std::flush; }

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::current_path() / "acceptance-runs" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// 1 ----------------------------------------------------------------------------

Verdict gradient_suite() {
  Clock clock;
  const GradcheckReport single = f32::run_gradcheck();
  const GradcheckReport dbl = f64::run_gradcheck();
  bool ok = true;
  for (const GradcheckReport* r : {&single, &dbl}) {
    double worst = 0;
    for (const auto& c : r->cases) {
      worst = std::max(worst, c.max_rel_err);
      if (!c.passed || !(c.max_rel_err < r->tolerance)) {
        ok = false;
        detail(r->precision + " " + c.name + " max_rel_err " + fmt(c.max_rel_err) + " exceeds " + fmt(r->tolerance));
      }
    }
    detail(r->precision + ": " + std::to_string(r->cases.size()) + " cases, worst rel err " + fmt(worst, 3) +
           " against " + fmt(r->tolerance) + ", " + fmt(r->seconds, 3) + " s");
  }
  const bool pixio_tiny = std::any_of(single.cases.begin(), single.cases.end(),
                                      [](const auto& c) { return c.name.find("pixio-tiny") != std::string::npos; });
  const double t = clock.seconds();
  return {ok && pixio_tiny && t < 120.0, "both precisions, " + fmt(t, 3) + " s (limit 120 s)"};
}

// 2 ----------------------------------------------------------------------------

std::size_t oracle_masked_blocks(double ratio, std::size_t blocks) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(blocks) + 0.5));
}

bool block_aligned(const MaskPlan& plan, std::size_t grid, std::size_t g) {
  for (std::size_t y = 0; y < grid; ++y) {
    for (std::size_t x = 0; x < grid; ++x) {
      if (plan.mask[y * grid + x] != plan.mask[(y / g * g) * grid + x / g * g]) return false;
    }
  }
  return true;
}

bool index_inverse(const MaskPlan& plan) {
  const std::size_t n = plan.size();
  if (plan.ids_shuffle.size() != n || plan.ids_restore.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t id = plan.ids_shuffle[i];
    if (id >= n || seen[id] || plan.ids_restore[id] != i) return false;
    seen[id] = true;
    if ((i < plan.n_visible) == plan.mask[id]) return false;
  }
  return true;
}

// gather then scatter: visible rows return exactly, masked rows hold the mask
// token, class tokens pass through untouched
bool token_round_trip(const MaskPlan& plan, Rng& rng) {
  const std::size_t n = plan.size(), d = 3, c = 2;
  Tensor cls({1, c, d}), patches({1, n, d}), token({d});
  for (auto& v : cls.storage()) v = static_cast<real>(rng.normal());
  for (auto& v : patches.storage()) v = static_cast<real>(rng.normal());
  for (auto& v : token.storage()) v = static_cast<real>(100 + rng.uniform());
  Graph g(false);
  const TokenStates full{Var::constant(cls), Var::constant(patches), TokenLayout::Full};
  const std::vector<MaskPlan> plans{plan};
  const TokenStates visible = gather_visible(g, full, plans);
  if (visible.patch_tokens() != plan.n_visible) return false;
  const TokenStates back = scatter_restore(g, visible, plans, Var::constant(token));
  if (back.cls.value().storage() != cls.storage()) return false;
  const Tensor& out = back.patches.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const real want = plan.mask[i] ? token[k] : patches[i * d + k];
      if (out[i * d + k] != want) return false;
    }
  }
  return true;
}

Verdict masking_suite() {
  Clock clock;
  bool ok = true;
  Rng rng(20);
  std::size_t checked = 0;

  // exhaustive: every mask pattern on a 4 x 4 grid
  for (std::uint32_t bits = 0; bits < (1u << 16); ++bits) {
    std::vector<bool> mask(16);
    for (std::size_t i = 0; i < 16; ++i) mask[i] = (bits >> i) & 1u;
    const MaskPlan plan = plan_from_mask(mask);
    if (!index_inverse(plan) || !token_round_trip(plan, rng)) {
      ok = false;
      detail("inverse failure on 4x4 pattern " + std::to_string(bits));
      break;
    }
    ++checked;
  }
  detail("N=16: all " + std::to_string(checked) + " mask patterns restore exactly");

  for (std::size_t grid : {4, 8, 16}) {
    for (std::size_t g : {1, 2, 4}) {
      for (double r : {0.625, 0.75}) {
        const MaskConfig cfg{r, g, grid, grid};
        const std::size_t blocks = (grid / g) * (grid / g);
        if (blocks < 2) {
          try {
            cfg.validate();
            ok = false;
            detail("degenerate " + std::to_string(grid) + "x" + std::to_string(grid) + " g=" + std::to_string(g) +
                   " accepted");
          } catch (const ConfigError&) {
          }
          continue;
        }
        const std::size_t want = oracle_masked_blocks(r, blocks) * g * g;
        const int draws = grid * grid <= 16 ? 2000 : 300;
        bool row_ok = cfg.masked_patches() == want;
        for (int i = 0; i < draws && row_ok; ++i) {
          const MaskPlan p = sample_block_mask(cfg, rng);
          const std::size_t masked = static_cast<std::size_t>(std::count(p.mask.begin(), p.mask.end(), true));
          row_ok = masked == want && p.n_masked() == want && block_aligned(p, grid, g) && index_inverse(p) &&
                   token_round_trip(p, rng);
        }
        if (!row_ok) ok = false;
        detail("N=" + std::to_string(grid * grid) + " g=" + std::to_string(g) + " r=" + fmt(r) + ": " +
               std::to_string(want) + " masked, " + std::to_string(draws) + " draws " + (row_ok ? "ok" : "BROKEN"));
      }
    }
  }
  const double t = clock.seconds();
  return {ok && t < 60.0, "counts, alignment and inverses, " + fmt(t, 3) + " s (limit 60 s)"};
}

// 3 ----------------------------------------------------------------------------

Verdict asymmetry_ledger() {
  struct Case {
    std::string name;
    ModelConfig model;
    double ratio;
    std::size_t g;
  };
  ModelConfig n256;
  n256.input_size = 64;
  n256.patch = 4;
  n256.enc_dim = 32;
  n256.enc_depth = 2;
  n256.enc_heads = 2;
  n256.dec_dim = 16;
  n256.dec_depth = 1;
  n256.dec_heads = 2;
  n256.n_cls = 8;
  ModelConfig n256c1 = n256;
  n256c1.n_cls = 1;
  const std::vector<Case> cases = {{"N=256 C=8 r=0.75 g=2", n256, 0.75, 2},
                                   {"N=256 C=1 r=0.625 g=1", n256c1, 0.625, 1},
                                   {"pixio-tiny N=64 C=8 r=0.75 g=2", ModelConfig::pixio_tiny(), 0.75, 2}};
  const Corpus corpus = synthetic_corpus(30, 16, 72);
  bool ok = true;
  std::size_t steps_checked = 0;
  for (const auto& c : cases) {
    PretrainConfig pc;
    pc.model = c.model;
    pc.mask_ratio = c.ratio;
    pc.mask_granularity = c.g;
    pc.optim = OptimConfig::desk(6, 4);
    pc.augment.output_size = c.model.input_size;
    pc.seed = 31;
    // independent arithmetic: C + N - round(r * blocks) * g^2
    const std::size_t n = c.model.num_patches(), blocks = n / (c.g * c.g);
    const std::size_t expected = c.model.n_cls + n - oracle_masked_blocks(c.ratio, blocks) * c.g * c.g;
    Pretrainer t(pc, corpus);
    bool row_ok = true;
    while (!t.finished()) {
      const StepRecord rec = t.step();
      row_ok = row_ok && rec.encoder_tokens == expected;
      ++steps_checked;
    }
    ok = ok && row_ok;
    detail(c.name + ": encoder length " + std::to_string(expected) + " at every step " + (row_ok ? "ok" : "BROKEN"));
  }
  ok = ok && cases[0].model.n_cls + 256 - 192 == 72;
  return {ok, std::to_string(steps_checked) + " steps, encoder length C + n_visible (72 for N=256, r=0.75, C=8)"};
}

// 4 ----------------------------------------------------------------------------

double mean_eval(const Pretrainer& t, const std::vector<Image>& images) {
  double s = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) s += t.evaluate(images, 100 + seed);
  return s / 4;
}

Verdict overfit_check() {
  Clock clock;
  const Corpus corpus = synthetic_corpus(40, 8, 64);
  PretrainConfig pc;
  // each image three times per step, under different masks
  pc.optim = OptimConfig::desk(500, 24);
  pc.optim.weight_decay = 0.0;
  pc.optim.clip_grad_norm = 1.0;
  pc.model.drop_path_rate = 0.0;
  // memorization: the whole image every step, only the mask varies
  pc.augment.scale_lo = 1.0;
  pc.augment.ratio_lo = 1.0;
  pc.augment.ratio_hi = 1.0;
  pc.seed = 41;
  Pretrainer t(pc, corpus);
  const double initial = mean_eval(t, corpus.images);
  while (!t.finished()) {
    const StepRecord r = t.step();
    if (r.step % 100 == 0) detail("step " + std::to_string(r.step) + " train loss " + fmt(r.loss));
  }
  const double final_loss = mean_eval(t, corpus.images);
  detail("masked loss on the 8 images: initial " + fmt(initial) + ", final " + fmt(final_loss) + ", ratio " +
         fmt(final_loss / initial));

  const auto demo = reconstruct_demo(t.model(), corpus.images, 0.75, 2, 42);
  bool paste = true;
  std::size_t compared = 0;
  const std::size_t p = pc.model.patch, grid = pc.model.grid();
  for (const auto& tri : demo) {
    for (std::size_t k = 0; k < grid * grid; ++k) {
      if (tri.plan.mask[k]) continue;
      const std::size_t y0 = k / grid * p, x0 = k % grid * p;
      for (std::size_t y = y0; y < y0 + p; ++y) {
        for (std::size_t x = x0; x < x0 + p; ++x) {
          for (std::size_t c = 0; c < 3; ++c) {
            paste = paste && tri.reconstruction.at(y, x, c) == tri.truth.at(y, x, c);
            ++compared;
          }
        }
      }
    }
  }
  detail("visible paste: " + std::to_string(compared) + " bytes compared, " + (paste ? "identical" : "DIFFERENT"));
  const fs::path dir = work_dir("overfit");
  write_png(dir / "recon-000.png", demo.front().composite());
  const double secs = clock.seconds();
  return {final_loss < 0.1 * initial && paste && secs < 600.0,
          "final/initial " + fmt(final_loss / initial) + " (limit 0.1), " + fmt(secs, 3) + " s (limit 600 s)"};
}

// 5 ----------------------------------------------------------------------------

Verdict learning_check() {
  Clock clock;
  const Corpus corpus = synthetic_corpus(50, 1000, 80);
  PretrainConfig pc;
  pc.optim = OptimConfig::desk(2000, 16);
  pc.seed = 51;
  Pretrainer t(pc, corpus);
  while (!t.finished()) t.step();
  const auto& h = t.history();
  const std::size_t window = 200;
  std::vector<double> means;
  for (std::size_t w = 0; w + window <= h.size(); w += window) {
    double s = 0;
    for (std::size_t i = w; i < w + window; ++i) s += h[i].loss;
    means.push_back(s / window);
  }
  std::ostringstream line;
  for (double m : means) line << ' ' << fmt(m);
  detail("window means (200 steps):" + line.str());
  bool decreasing = true;
  for (std::size_t i = 1; i < means.size(); ++i) decreasing = decreasing && means[i] < means[i - 1];
  double first = 0;
  for (std::size_t i = 0; i < 10; ++i) first += h[i].loss / 10;
  const double ratio = means.back() / first;
  detail("initial (first 10 steps) " + fmt(first) + ", final window " + fmt(means.back()));
  write_metrics(work_dir("learning") / "metrics.tsv", h);
  const double secs = clock.seconds();
  return {decreasing && ratio < 0.6 && secs < 3600.0,
          std::string(decreasing ? "strictly decreasing" : "NOT strictly decreasing") + ", final/initial " +
              fmt(ratio) + " (limit 0.6), " + fmt(secs, 4) + " s (limit 3600 s)"};
}

// 6 ----------------------------------------------------------------------------

Verdict curation_suite() {
  Clock clock;
  bool ok = true;
  Rng rng(60);
  for (double p : {0.05, 0.3, 0.5, 0.8, 1.0, 1.7}) {
    CurationRecord r;
    r.norm_loss = p;
    const int n = 10000;
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += soft_sample(r, rng);
    const double want = std::min(1.0, p);
    const double sigma = std::sqrt(want * (1 - want) / n);
    const bool row = std::abs(hits / double(n) - want) <= 3 * sigma;
    ok = ok && row;
    detail("norm_loss " + fmt(p) + ": accepted " + fmt(hits / double(n)) + " expected " + fmt(want) + " +- " +
           fmt(3 * sigma, 2));
  }

  Image two(8, 8);
  for (std::size_t i = 0; i < two.rgb.size(); ++i) two.rgb[i] = (i / 3) % 2 ? 250 : 3;
  const double h0 = color_entropy(flat_image(16, 90, 140, 30)), h1 = color_entropy(two);
  ok = ok && h0 == 0.0 && h1 == 1.0;
  detail("entropy: constant " + fmt(h0) + " bits, two-level " + fmt(h1) + " bits");

  // scoring model: pixio-tiny briefly trained on scenes
  PretrainConfig pc;
  pc.optim = OptimConfig::desk(150, 16);
  pc.seed = 61;
  const Corpus scenes = synthetic_corpus(62, 256, 80);
  Pretrainer t(pc, scenes);
  while (!t.finished()) t.step();

  // a pool with many low-value images: flat colours, scenes, noise
  Corpus pool;
  Rng colours(63);
  const std::size_t n_flat = 150, n_natural = 150, n_noise = 50;
  for (std::size_t i = 0; i < n_flat; ++i) {
    pool.images.push_back(flat_image(72, static_cast<std::uint8_t>(colours.below(256)),
                                     static_cast<std::uint8_t>(colours.below(256)),
                                     static_cast<std::uint8_t>(colours.below(256))));
    pool.source_ids.push_back("flat-" + std::to_string(i));
  }
  const Corpus natural = synthetic_corpus(64, n_natural, 72);
  for (std::size_t i = 0; i < n_natural; ++i) {
    pool.images.push_back(natural.images[i]);
    pool.source_ids.push_back("natural-" + std::to_string(i));
  }
  for (std::size_t i = 0; i < n_noise; ++i) {
    pool.images.push_back(noise_image(65 + i, 72));
    pool.source_ids.push_back("noise-" + std::to_string(i));
  }
  ScoreConfig sc;
  sc.mask = pc.mask_config();
  sc.seed = 66;
  Rng draw(67);
  const CurationResult res = curate(score_corpus(pool, t.model(), sc), 3.0, draw);
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // kind -> (accepted, total)
  std::map<std::string, double> loss;
  for (const auto& r : res.records) {
    const std::string kind = r.source_id.substr(0, r.source_id.find('-'));
    tally[kind].first += r.accepted;
    tally[kind].second += 1;
    loss[kind] += r.raw_loss;
  }
  auto rate = [&](const std::string& k) { return tally[k].first / double(tally[k].second); };
  for (const auto& [k, v] : tally) {
    detail(k + ": mean raw loss " + fmt(loss[k] / v.second) + ", accepted " + std::to_string(v.first) + "/" +
           std::to_string(v.second));
  }
  write_curation_manifest(work_dir("curation") / "curation.tsv", res.records);
  const double secs = clock.seconds();
  ok = ok && rate("flat") < 0.1 && rate("natural") > 0.5 && secs < 300.0;
  return {ok, "flat " + fmt(rate("flat")) + " (limit < 0.1), natural " + fmt(rate("natural")) + " (limit > 0.5), " +
                  fmt(secs, 3) + " s (limit 300 s)"};
}

// 7 ----------------------------------------------------------------------------

Verdict distillation_check() {
  Clock clock;
  const Corpus corpus = synthetic_corpus(70, 256, 80);
  const std::vector<Image> held(corpus.images.begin(), corpus.images.begin() + 32);

  PretrainConfig pc;
  pc.optim = OptimConfig::desk(150, 16);
  pc.seed = 71;
  Pretrainer teacher_run(pc, corpus);
  while (!teacher_run.finished()) teacher_run.step();
  const PixioModel& teacher = teacher_run.model();

  DistillConfig same = DistillConfig::for_student(teacher.config(), OptimConfig::desk(10, 8));
  same.student.drop_path_rate = 0.0;
  Distiller copy(teacher, same, corpus);
  copy.copy_student_from(teacher.params());
  const double copied = copy.evaluate(held, 1);
  detail("equal-shape student copied from the teacher: loss " + fmt(copied, 3));

  ModelConfig small = teacher.config();
  small.enc_dim = 96;
  small.enc_depth = 6;
  small.enc_heads = 3;
  OptimConfig oc = OptimConfig::desk(600, 16);
  oc.peak_lr = 1e-3;
  DistillConfig dc = DistillConfig::for_student(small, oc);
  dc.seed = 72;
  Distiller fresh(teacher, dc, corpus);
  const double start = fresh.evaluate(held, 1);
  double now = start;
  std::size_t steps = 0;
  while (!fresh.finished()) {
    fresh.step();
    ++steps;
    if (steps % 50 == 0) {
      now = fresh.evaluate(held, 1);
      detail("fresh 96-wide student, step " + std::to_string(steps) + ": held-out loss " + fmt(now));
      if (now < 0.5) break;
    }
  }
  const double secs = clock.seconds();
  return {copied < 1e-5 && now < 0.5 && secs < 1200.0,
          "copied " + fmt(copied, 3) + " (limit 1e-5), fresh " + fmt(start) + " -> " + fmt(now) + " in " +
              std::to_string(steps) + " steps (limit 0.5), " + fmt(secs, 3) + " s (limit 1200 s)"};
}

// 8 ----------------------------------------------------------------------------

Tensor clustered(std::size_t n, std::size_t d, Rng& rng, std::vector<int>& labels) {
  Tensor x({n, d});
  labels.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % 2);
    for (std::size_t j = 0; j < d; ++j) {
      x[i * d + j] = static_cast<real>((labels[i] ? 4.0 : -4.0) * (j % 2 ? 1 : -1) + 0.5 * rng.normal());
    }
  }
  return x;
}

Verdict probe_suite() {
  bool ok = true;
  Rng rng(80);
  std::vector<int> ty, qy;
  const Tensor tx = clustered(400, 8, rng, ty), qx = clustered(200, 8, rng, qy);
  const double sep = accuracy(knn_classify(tx, ty, qx, KnnConfig{}), qy);
  detail("k-NN on separable clusters: " + fmt(sep));

  // the same features with labels unrelated to them
  std::vector<int> shuffled_train(4000), shuffled_query(4000);
  std::vector<int> dummy;
  const Tensor big_train = clustered(4000, 8, rng, dummy), big_query = clustered(4000, 8, rng, dummy);
  for (auto& v : shuffled_train) v = static_cast<int>(rng.below(2));
  for (auto& v : shuffled_query) v = static_cast<int>(rng.below(2));
  const double chance = accuracy(knn_classify(big_train, shuffled_train, big_query, KnnConfig{}), shuffled_query);
  detail("k-NN on shuffled labels: " + fmt(chance) + " (chance 0.5)");

  Tensor x({400, 6});
  for (auto& v : x.storage()) v = static_cast<real>(rng.normal());
  Tensor y({400, 2});
  for (std::size_t i = 0; i < 400; ++i) {
    y[i * 2] = static_cast<real>(0.7 * x[i * 6] - 1.1 * x[i * 6 + 2] + 9.0);
    y[i * 2 + 1] = static_cast<real>(0.3 * x[i * 6 + 4] + x[i * 6 + 5] + 5.0);
  }
  ProbeConfig cfg;
  cfg.epochs = 3000;
  cfg.lr = 1e-2;
  const ProbeMetrics reg = linear_probe_regress(x, y, cfg);
  detail("linear probe on realizable targets: rmse " + fmt(reg.rmse, 3));

  const bool d1 = delta1({1, 2, 3}, {1, 2, 3}) == 1.0 && delta1({1.3, 2.6, 3.9}, {1, 2, 3}) == 0.0 &&
                  delta1({1.0, 1.2, 2.0}, {1, 1, 1}) == 2.0 / 3 && delta1({1.249}, {1.0}) == 1.0 &&
                  delta1({1.25}, {1.0}) == 0.0;
  detail(std::string("delta1 unit cases ") + (d1 ? "exact" : "WRONG"));
  ok = sep == 1.0 && std::abs(chance - 0.5) <= 0.05 && reg.rmse <= 1e-3 && d1;
  return {ok, "separable " + fmt(sep) + ", shuffled " + fmt(chance) + ", rmse " + fmt(reg.rmse, 3)};
}

// 9 ----------------------------------------------------------------------------

struct TrendArm {
  std::string label;
  std::function<void(PretrainConfig&)> apply;
};

Verdict trend_check() {
  Clock clock;
  const std::size_t steps = 200, batch = 16, seeds = 5;
  const Corpus corpus = synthetic_corpus(90, 1000, 80);
  const ProbeDataset probe = scene_dataset(91, 1000, 64);
  const std::vector<TrendArm> arms = {
      {"base", [](PretrainConfig&) {}},
      {"dec96x24", [](PretrainConfig& c) { c.model.dec_depth = 24; }},
      {"g1", [](PretrainConfig& c) { c.mask_granularity = 1; }},
      {"C1", [](PretrainConfig& c) { c.model.n_cls = 1; }},
  };
  const fs::path dir = work_dir("trends");
  std::ofstream table(dir / "trends.tsv");
  table << "seed\tarm\tfinal_loss\tknn_accuracy\n";
  int dec_wins = 0, gran_wins = 0, cls_wins = 0;
  for (std::size_t s = 0; s < seeds; ++s) {
    std::map<std::string, double> acc;
    for (const auto& arm : arms) {
      // base: decoder 96x8, 2x2 masking at r = 0.75, 4 class tokens
      PretrainConfig pc;
      pc.model.n_cls = 4;
      pc.optim = OptimConfig::desk(steps, batch);
      pc.seed = 900 + s;
      arm.apply(pc);
      Pretrainer t(pc, corpus);
      while (!t.finished()) t.step();
      ProbeSpec spec;
      spec.probe.seed = pc.seed;
      acc[arm.label] = run_probe(t.model(), probe, pc.model.enc_depth, spec).accuracy;
      table << pc.seed << '\t' << arm.label << '\t' << format_double(t.history().back().loss) << '\t'
            << format_double(acc[arm.label]) << '\n';
    }
    dec_wins += acc["dec96x24"] > acc["base"];
    gran_wins += acc["base"] > acc["g1"];
    cls_wins += acc["base"] > acc["C1"];
    detail("seed " + std::to_string(900 + s) + ": k-NN base " + fmt(acc["base"]) + ", dec 96x24 " +
           fmt(acc["dec96x24"]) + ", 1x1 masking " + fmt(acc["g1"]) + ", C=1 " + fmt(acc["C1"]));
  }
  detail("(a) decoder 96x24 beats 96x8 in " + std::to_string(dec_wins) + "/5 seeds");
  detail("(b) 2x2 masking beats 1x1 in " + std::to_string(gran_wins) + "/5 seeds");
  detail("(c) C=4 beats C=1 in " + std::to_string(cls_wins) + "/5 seeds");
  detail("per-run table: " + (dir / "trends.tsv").string());
  const bool all = dec_wins >= 3 && gran_wins >= 3 && cls_wins >= 3;
  return {all, "a " + std::to_string(dec_wins) + "/5, b " + std::to_string(gran_wins) + "/5, c " +
                   std::to_string(cls_wins) + "/5 (need 3 each), " + fmt(clock.seconds(), 4) + " s"};
}

// 10 ---------------------------------------------------------------------------

Verdict reproducibility() {
  const fs::path root = work_dir("repro");
  const std::vector<std::string> tiny = {"--set", "model.input_size=16", "--set", "model.patch=4",
                                         "--set", "model.enc_dim=16",    "--set", "model.enc_depth=2",
                                         "--set", "model.enc_heads=2",   "--set", "model.dec_dim=8",
                                         "--set", "model.dec_depth=1",   "--set", "model.dec_heads=2",
                                         "--set", "model.n_cls=2"};
  auto with_tiny = [&](std::vector<std::string> a) {
    a.insert(a.end(), tiny.begin(), tiny.end());
    return a;
  };
  // every run lands in <root>/<rep>/<name>; reruns must match byte for byte
  auto commands = [&](const fs::path& base) {
    const std::string ckpt = (base / "pretrain" / "checkpoint.bin").string();
    return std::vector<std::pair<std::string, std::vector<std::string>>>{
        {"pretrain", with_tiny({"pretrain", "--data", "synthetic:24", "--steps", "6", "--batch", "4", "--seed", "5",
                                "--out", (base / "pretrain").string()})},
        {"curate", {"curate", "--checkpoint", ckpt, "--data", "synthetic:40", "--threshold", "1.0", "--seed", "6",
                    "--out", (base / "curate").string()}},
        {"distill", {"distill", "--teacher", ckpt, "--data", "synthetic:16", "--steps", "4", "--batch", "4",
                     "--seed", "7", "--out", (base / "distill").string()}},
        {"knn", {"knn", "--checkpoint", ckpt, "--set", "eval.images=40", "--out", (base / "knn").string()}},
        {"probe", {"probe", "--checkpoint", ckpt, "--task", "depth", "--set", "eval.images=12", "--set",
                   "probe.epochs=10", "--out", (base / "probe").string()}},
        {"blockprobe", {"blockprobe", "--checkpoint", ckpt, "--task", "linear", "--blocks", "1,2", "--set",
                        "eval.images=40", "--set", "probe.epochs=10", "--out", (base / "blockprobe").string()}},
        {"reconstruct", {"reconstruct", "--checkpoint", ckpt, "--data", "synthetic:3", "--count", "3", "--out",
                         (base / "reconstruct").string()}},
        {"sweep", with_tiny({"sweep", "--axis", "n-cls=1,2", "--data", "synthetic:12", "--steps", "2",
                             "--batch", "3", "--set", "eval.images=16", "--set", "knn.k=3", "--out",
                             (base / "sweep").string()})},
    };
  };
  bool ok = true;
  std::size_t files = 0;
  for (const char* rep : {"a", "b"}) {
    for (const auto& [name, args] : commands(root / rep)) {
      std::ostringstream out, err;
      const int code = run_cli(args, out, err);
      if (code != 0) {
        ok = false;
        detail(name + " exited " + std::to_string(code) + ": " + err.str());
      }
    }
  }
  for (const auto& [name, args] : commands(root / "a")) {
    const fs::path a = root / "a" / name, b = root / "b" / name;
    std::size_t same = 0, differ = 0;
    if (!fs::exists(a)) {
      ok = false;
      continue;
    }
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), a);
      std::string left = slurp(entry.path()), right = slurp(b / rel);
      if (rel.filename() == "config.cfg") {
        // echoed paths under the run root are the only legitimate difference
        const std::string pa = (root / "a").string(), pb = (root / "b").string();
        for (std::size_t at; (at = right.find(pb)) != std::string::npos;) right.replace(at, pb.size(), pa);
      }
      (left == right ? same : differ) += 1;
    }
    files += same + differ;
    ok = ok && differ == 0 && same > 0;
    detail(name + ": " + std::to_string(same) + " files identical, " + std::to_string(differ) + " differ");
  }
  return {ok, std::to_string(files) + " artifacts compared across two runs of every command"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Pixio acceptance gate");
  std::vector<int> chosen;
  app.add_option("--criterion", chosen, "criterion numbers to run (default: all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  pixio::tune_allocator();
  if (chosen.empty()) {
    chosen.resize(10);
    std::iota(chosen.begin(), chosen.end(), 1);
  }

  const std::map<int, std::pair<std::string, std::function<Verdict()>>> criteria = {
      {1, {"gradient suite", gradient_suite}},
      {2, {"masking suite", masking_suite}},
      {3, {"asymmetry ledger", asymmetry_ledger}},
      {4, {"overfit check", overfit_check}},
      {5, {"learning check", learning_check}},
      {6, {"curation suite", curation_suite}},
      {7, {"distillation check", distillation_check}},
      {8, {"probe suite", probe_suite}},
      {9, {"trend check (soft)", trend_check}},
      {10, {"reproducibility", reproducibility}},
  };

  int failures = 0;
  for (int n : chosen) {
    const auto& [title, run] = criteria.at(n);
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS " : "FAIL ") << n << ' ' << title << ": " << v.summary << '\n' << std::flush;
    // a missed trend is reported but does not fail the gate; see the investigation note
    if (!v.pass && n != 9) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
