#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "pixio/trainer.hpp"

using namespace pixio;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("pixio-pipeline-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

PretrainConfig tiny_run(std::size_t steps) {
  PretrainConfig c;
  c.model.input_size = 16;
  c.model.patch = 4;
  c.model.enc_dim = 16;
  c.model.enc_depth = 2;
  c.model.enc_heads = 2;
  c.model.dec_dim = 8;
  c.model.dec_depth = 1;
  c.model.dec_heads = 2;
  c.model.n_cls = 2;
  c.optim = OptimConfig::desk(steps, 4);
  c.optim.warmup_steps = 1;
  c.augment.output_size = 16;
  c.seed = 42;
  return c;
}

// single-parameter store with a chosen gradient
struct Scalar {
  ParamStore store;
  Var w;
  Scalar(real value, real grad, bool decay) {
    w = store.add("w", Tensor::from({1}, {value}), decay);
    w.grad_buffer()[0] = grad;
  }
};

}  // namespace

TEST_SUITE("optimizer") {
  TEST_CASE("zero gradients without decay leave parameters unchanged") {
    OptimConfig c = OptimConfig::desk(10, 1);
    c.weight_decay = 0;
    Scalar s(real(0.7), 0, true);
    AdamW opt(s.store, c);
    for (std::size_t k = 1; k < 5; ++k) opt.step(s.store, k);
    CHECK(s.w.value()[0] == real(0.7));
  }

  TEST_CASE("one step on a scalar matches the closed form") {
    OptimConfig c = OptimConfig::desk(10, 1);
    c.warmup_steps = 2;
    const double w0 = 0.5, g = 0.3;
    Scalar s(static_cast<real>(w0), static_cast<real>(g), true);
    AdamW opt(s.store, c);
    const double lr = opt.step(s.store, 1);
    CHECK(lr == doctest::Approx(c.peak_lr / 2));
    const double m = (1 - c.beta1) * g / (1 - c.beta1);
    const double v = (1 - c.beta2) * g * g / (1 - c.beta2);
    const double expect = w0 - lr * (m / (std::sqrt(v) + c.eps) + c.weight_decay * w0);
    CHECK(std::abs(s.w.value()[0] - expect) < 1e-7);
  }

  TEST_CASE("decoupled decay shrinks by lr * lambda per step") {
    OptimConfig c = OptimConfig::desk(10, 1);
    c.weight_decay = 0.1;
    Scalar s(real(2.0), 0, true);
    AdamW opt(s.store, c);
    double expect = 2.0;
    for (std::size_t k = 1; k < 6; ++k) {
      const double lr = opt.step(s.store, k);
      expect *= 1 - lr * 0.1;
    }
    CHECK(s.w.value()[0] == doctest::Approx(expect).epsilon(1e-6));
  }

  TEST_CASE("entries flagged without decay are not decayed") {
    OptimConfig c = OptimConfig::desk(10, 1);
    c.weight_decay = 0.5;
    Scalar s(real(1.0), 0, false);
    AdamW opt(s.store, c);
    opt.step(s.store, 3);
    CHECK(s.w.value()[0] == real(1.0));
    const PixioModel model(tiny_run(1).model, 1);
    for (const auto& e : model.params().entries()) {
      const bool weight = e.name.ends_with(".weight") && e.name.find("norm") == std::string::npos;
      CHECK_MESSAGE(e.decay == weight, e.name);
    }
  }

  TEST_CASE("non-finite gradient aborts the step without touching state") {
    Scalar s(real(1.0), std::numeric_limits<real>::quiet_NaN(), true);
    AdamW opt(s.store, OptimConfig::desk(10, 1));
    CHECK_THROWS_AS(opt.step(s.store, 3), NumericError);
    CHECK(s.w.value()[0] == real(1.0));
    CHECK(opt.updates() == 0);
    CHECK(opt.first_moments()[0][0] == real(0));
  }

  TEST_CASE("learning-rate schedule") {
    OptimConfig c;
    c.peak_lr = 1e-3;
    c.warmup_steps = 100;
    c.total_steps = 1000;
    CHECK(lr_schedule(0, c) == 0.0);
    CHECK(lr_schedule(50, c) == doctest::Approx(5e-4));
    CHECK(lr_schedule(100, c) == doctest::Approx(1e-3));
    const std::size_t mid = (100 + 1000) / 2;
    const double expect = 1e-3 * 0.5 * (1 + std::cos(std::numbers::pi * (mid - 100.0) / 900.0));
    CHECK(lr_schedule(mid, c) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(lr_schedule(1000, c) == doctest::Approx(0.0));
    for (std::size_t s = 101; s < 1000; ++s) CHECK(lr_schedule(s, c) <= lr_schedule(s - 1, c));
  }

  TEST_CASE("configuration invariants") {
    OptimConfig c = OptimConfig::desk(10, 1);
    c.warmup_steps = 10;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = OptimConfig::desk(10, 1);
    c.beta2 = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(OptimConfig::desk(10000, 128).warmup_steps == 1000);
    CHECK(OptimConfig{}.clip_grad_norm == 0.0);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save, load, save is byte identical and every tensor round-trips") {
    const fs::path dir = scratch("roundtrip");
    const Corpus corpus = synthetic_corpus(1, 8, 24);
    Pretrainer trainer(tiny_run(3), corpus);
    trainer.step();
    trainer.step();
    const Checkpoint a = trainer.snapshot();
    save_checkpoint(dir / "a.bin", a);
    const Checkpoint b = load_checkpoint(dir / "a.bin");
    CHECK(a == b);
    save_checkpoint(dir / "b.bin", b);
    CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));
    CHECK(b.step == 2);
  }

  TEST_CASE("tampered magic, truncation and wrong shapes are refused") {
    const fs::path dir = scratch("tamper");
    const Corpus corpus = synthetic_corpus(1, 4, 24);
    Pretrainer trainer(tiny_run(3), corpus);
    save_checkpoint(dir / "ok.bin", trainer.snapshot());
    std::string bytes = slurp(dir / "ok.bin");
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream(dir / "magic.bin", std::ios::binary) << bad;
    CHECK_THROWS_AS(load_checkpoint(dir / "magic.bin"), FormatError);
    std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(dir / "short.bin"), FormatError);

    PretrainConfig other = tiny_run(3);
    other.model.enc_dim = 32;
    Pretrainer wider(other, corpus);
    CHECK_THROWS_AS(wider.restore(load_checkpoint(dir / "ok.bin")), FormatError);
  }

  TEST_CASE("resuming at step k replays the uninterrupted trajectory bit for bit") {
    const fs::path dir = scratch("resume");
    const Corpus corpus = synthetic_corpus(2, 10, 24);
    PretrainConfig cfg = tiny_run(6);
    cfg.model.drop_path_rate = 0.2;
    Pretrainer straight(cfg, corpus);
    while (!straight.finished()) straight.step();

    Pretrainer first(cfg, corpus);
    for (int i = 0; i < 3; ++i) first.step();
    save_checkpoint(dir / "k.bin", first.snapshot());
    Pretrainer resumed(cfg, corpus);
    resumed.restore(load_checkpoint(dir / "k.bin"));
    while (!resumed.finished()) resumed.step();

    REQUIRE(resumed.history().size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(resumed.history()[i].loss == straight.history()[i + 3].loss);
    CHECK(resumed.model().params().fingerprint() == straight.model().params().fingerprint());
  }
}

TEST_SUITE("pretraining") {
  TEST_CASE("same seed, identical loss curves and checkpoints") {
    const Corpus corpus = synthetic_corpus(3, 12, 24);
    const fs::path a = scratch("det-a"), b = scratch("det-b");
    const RunResult ra = pretrain(tiny_run(5), corpus, a);
    const RunResult rb = pretrain(tiny_run(5), corpus, b);
    REQUIRE(ra.history.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(ra.history[i].loss == rb.history[i].loss);
    CHECK(slurp(ra.checkpoint) == slurp(rb.checkpoint));
    CHECK(slurp(a / "metrics.tsv") == slurp(b / "metrics.tsv"));
    CHECK(fs::exists(a / "config.cfg"));
    CHECK(fs::exists(a / "corpus.manifest"));
  }

  TEST_CASE("encoder sees only class tokens plus visible patches") {
    const Corpus corpus = synthetic_corpus(4, 4, 24);
    PretrainConfig cfg = tiny_run(2);
    Pretrainer trainer(cfg, corpus);
    const StepRecord r = trainer.step();
    CHECK(r.encoder_tokens == cfg.model.n_cls + (cfg.model.num_patches() - cfg.mask_config().masked_patches()));
    CHECK(std::isfinite(r.loss));
    CHECK(r.lr == 0.0);
  }

  TEST_CASE("batch composition depends only on seed and step") {
    const auto a = batch_indices(7, 20, 6, 5), b = batch_indices(7, 20, 6, 5);
    CHECK(a == b);
    CHECK(batch_indices(8, 20, 6, 5) != a);
    std::vector<int> seen(20, 0);
    for (std::size_t s = 0; s < 10; ++s) {
      for (std::size_t i : batch_indices(7, 20, 2, s)) ++seen[i];
    }
    for (int n : seen) CHECK(n == 1);  // one epoch covers every image once
  }

  TEST_CASE("exploding run halts with a reference to the last good checkpoint") {
    const fs::path dir = scratch("explode");
    const Corpus corpus = synthetic_corpus(5, 8, 24);
    PretrainConfig cfg = tiny_run(40);
    cfg.optim.peak_lr = 1e30;
    cfg.checkpoint_every = 1;
    try {
      pretrain(cfg, corpus, dir);
      FAIL("expected a training error");
    } catch (const TrainingError& e) {
      CHECK(fs::exists(e.last_good_checkpoint));
      CHECK(std::string(e.what()).find("halted") != std::string::npos);
      const Checkpoint last = load_checkpoint(e.last_good_checkpoint);
      for (const auto& [name, t] : last.tensors) CHECK_MESSAGE(t.all_finite(), name);
    }
  }

  TEST_CASE("configuration round-trips through key-value text") {
    PretrainConfig cfg = tiny_run(9);
    cfg.mask_ratio = 0.625;
    cfg.norm_target = false;
    KeyValues kv;
    cfg.write(kv);
    const PretrainConfig back = PretrainConfig::read(kv);
    CHECK(back.model == cfg.model);
    CHECK(back.mask_ratio == 0.625);
    CHECK_FALSE(back.norm_target);
    CHECK(back.optim.total_steps == 9);
    CHECK(back.seed == 42);
  }
}

TEST_SUITE("distillation") {
  TEST_CASE("drop-path defaults: 0.4 for capable students, 0.1 for small ones") {
    ModelConfig big = ModelConfig::pixio_tiny();
    big.enc_dim = 384;
    big.enc_heads = 6;
    const DistillConfig large = DistillConfig::for_student(big, OptimConfig::desk(10, 2));
    CHECK(large.student.drop_path_rate == 0.4);
    CHECK(large.student_masked);
    const DistillConfig small = DistillConfig::for_student(ModelConfig::pixio_tiny(), OptimConfig::desk(10, 2));
    CHECK(small.student.drop_path_rate == 0.1);
    CHECK_FALSE(small.student_masked);
    CHECK(large.mask_ratio == 0.5);
    CHECK(large.mask_granularity == 4);
  }

  TEST_CASE("a student copied from an equal-shape teacher starts near zero loss") {
    const Corpus corpus = synthetic_corpus(6, 8, 24);
    const PretrainConfig pc = tiny_run(1);
    const PixioModel teacher(pc.model, 3);
    DistillConfig dc = DistillConfig::for_student(pc.model, OptimConfig::desk(4, 4));
    dc.augment.output_size = 16;
    dc.student.drop_path_rate = 0.0;
    Distiller d(teacher, dc, corpus);
    d.copy_student_from(teacher.params());
    CHECK(d.evaluate(corpus.images, 1) < 1e-5);
    Distiller fresh(teacher, dc, corpus);
    CHECK(fresh.evaluate(corpus.images, 1) > 0.05);
  }

  TEST_CASE("distillation loss decreases on a tiny run") {
    const Corpus corpus = synthetic_corpus(7, 8, 24);
    const PretrainConfig pc = tiny_run(1);
    const PixioModel teacher(pc.model, 4);
    OptimConfig oc = OptimConfig::desk(40, 8);
    oc.peak_lr = 3e-3;
    DistillConfig dc = DistillConfig::for_student(pc.model, oc);
    dc.augment.output_size = 16;
    dc.seed = 5;
    Distiller d(teacher, dc, corpus);
    const double before = d.evaluate(corpus.images, 1);
    while (!d.finished()) d.step();
    CHECK(d.evaluate(corpus.images, 1) < 0.8 * before);
  }
}
