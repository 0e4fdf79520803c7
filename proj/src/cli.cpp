#include "pixio/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "pixio/checkpoint.hpp"
#include "pixio/curation.hpp"
#include "pixio/eval.hpp"
#include "pixio/gradcheck.hpp"
#include "pixio/trainer.hpp"

namespace pixio {

namespace {

using namespace pixio::f32;
namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<long long> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "override a config key (key=value), repeatable");
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--out", c.out, "output directory");
}

/// Config file, then --set overrides, then dedicated flags.
KeyValues user_config(const Common& c, const std::vector<std::pair<std::string, std::string>>& flags) {
  KeyValues kv;
  if (!c.config.empty()) kv = KeyValues::load(c.config);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t");
      const auto e = v.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    kv.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  for (const auto& [key, value] : flags) {
    if (!value.empty()) kv.set(key, value);
  }
  if (c.seed) kv.set("seed", *c.seed);
  return kv;
}

/// Every user key must be one the command understands.
void reject_unknown(const KeyValues& user, const KeyValues& resolved) {
  for (const auto& [key, value] : user.entries()) {
    if (!resolved.has(key)) throw ConfigError("unknown config key '" + key + "'");
  }
}

fs::path output_dir(const Common& c, const std::string& command, std::uint64_t seed) {
  if (!c.out.empty()) return c.out;
  const char* root = std::getenv("PIXIO_OUTPUT_ROOT");
  return fs::path(root && *root ? root : "runs") / (command + "-seed" + std::to_string(seed));
}

std::uint64_t seed_of(const KeyValues& kv) { return static_cast<std::uint64_t>(kv.get_int("seed", 0)); }

/// "synthetic:N" renders N procedural scenes; anything else is a path.
Corpus load_source(const std::string& source, std::uint64_t seed, std::size_t size) {
  const std::string prefix = "synthetic:";
  if (source.rfind(prefix, 0) == 0) {
    std::size_t count = 0;
    try {
      count = std::stoul(source.substr(prefix.size()));
    } catch (const std::exception&) {
      throw ConfigError("malformed data source '" + source + "'");
    }
    if (count == 0) throw ConfigError("synthetic data source needs at least one image");
    return synthetic_corpus(seed, count, size);
  }
  Corpus corpus = load_corpus(source);
  for (const auto& w : corpus.warnings) std::cerr << "warning: " << w << '\n';
  return corpus;
}

void echo_config(const fs::path& dir, const KeyValues& resolved) {
  fs::create_directories(dir);
  resolved.save(dir / "config.cfg");
}

PixioModel load_model(const std::string& path) {
  if (path.empty()) throw ConfigError("a checkpoint is required (--checkpoint)");
  return model_from_checkpoint(load_checkpoint(path));
}

// pretrain -------------------------------------------------------------------

struct PretrainArgs {
  Common common;
  std::string data, steps, batch;
};

KeyValues resolve_pretrain(const KeyValues& user, PretrainConfig& cfg) {
  cfg = PretrainConfig::read(user);
  KeyValues resolved;
  cfg.write(resolved);
  resolved.set("data", user.get("data", "synthetic:1024"));
  reject_unknown(user, resolved);
  return resolved;
}

int cmd_pretrain(const PretrainArgs& a, std::ostream& out) {
  const KeyValues user =
      user_config(a.common, {{"data", a.data}, {"optim.total_steps", a.steps}, {"optim.batch_size", a.batch}});
  PretrainConfig cfg;
  const KeyValues resolved = resolve_pretrain(user, cfg);
  cfg.validate();
  const fs::path dir = output_dir(a.common, "pretrain", cfg.seed);
  const Corpus corpus = load_source(resolved.require("data"), cfg.seed, cfg.model.input_size);
  const std::size_t every = std::max<std::size_t>(1, cfg.optim.total_steps / 20);
  const RunResult r = pretrain(cfg, corpus, dir, [&](const StepRecord& s) {
    if (s.step % every == 0 || s.step + 1 == cfg.optim.total_steps) {
      out << "step " << s.step << " loss " << format_double(s.loss) << " lr " << format_double(s.lr) << '\n';
    }
  });
  echo_config(dir, resolved);
  out << "checkpoint " << r.checkpoint.string() << '\n';
  return 0;
}

// curate ---------------------------------------------------------------------

struct CurateArgs {
  Common common;
  std::string checkpoint, data, threshold;
};

int cmd_curate(const CurateArgs& a, std::ostream& out) {
  KeyValues user = user_config(a.common, {{"checkpoint", a.checkpoint},
                                          {"data", a.data},
                                          {"curation.entropy_threshold", a.threshold}});
  const std::string ckpt_path = user.get("checkpoint", "");
  if (ckpt_path.empty()) throw ConfigError("curate needs --checkpoint");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const PixioModel model = model_from_checkpoint(ckpt);
  const ModelConfig& mc = model.config();

  KeyValues resolved;
  resolved.set("command", "curate");
  resolved.set("checkpoint", ckpt_path);
  resolved.set("data", user.get("data", "synthetic:256"));
  resolved.set("seed", static_cast<long long>(seed_of(user)));
  resolved.set("curation.entropy_threshold", user.get_double("curation.entropy_threshold", 3.0));
  resolved.set("curation.draws", user.get_size("curation.draws", 4));
  resolved.set("curation.batch", user.get_size("curation.batch", 32));
  resolved.set("mask.ratio", user.get_double("mask.ratio", ckpt.config.get_double("mask.ratio", 0.75)));
  resolved.set("mask.granularity",
               user.get_size("mask.granularity", ckpt.config.get_size("mask.granularity", 2)));
  resolved.set("norm_target", user.get_bool("norm_target", ckpt.config.get_bool("norm_target", true)));
  reject_unknown(user, resolved);

  ScoreConfig sc;
  sc.mask = MaskConfig{resolved.get_double("mask.ratio", 0.75), resolved.get_size("mask.granularity", 2), mc.grid(),
                       mc.grid()};
  sc.draws = resolved.get_size("curation.draws", 4);
  sc.batch = resolved.get_size("curation.batch", 32);
  sc.norm_target = resolved.get_bool("norm_target", true);
  sc.seed = seed_of(resolved);

  const fs::path dir = output_dir(a.common, "curate", sc.seed);
  const Corpus corpus = load_source(resolved.require("data"), sc.seed, mc.input_size);
  std::vector<std::string> warnings;
  auto records = score_corpus(corpus, model, sc, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  Rng rng = Rng::derive(sc.seed, {0xc0a7e});
  const CurationResult result = curate(std::move(records), resolved.get_double("curation.entropy_threshold", 3.0), rng);

  echo_config(dir, resolved);
  write_curation_manifest(dir / "curation.tsv", result.records);
  result.summary.save(dir / "summary.cfg");
  std::ofstream accepted(dir / "accepted.txt", std::ios::trunc);
  for (const auto& id : result.accepted_ids) accepted << id << '\n';
  out << "accepted " << result.accepted_ids.size() << " of " << result.records.size() << " images\n";
  return 0;
}

// distill --------------------------------------------------------------------

struct DistillArgs {
  Common common;
  std::string teacher, data, steps, batch;
  bool copy_teacher = false;
};

int cmd_distill(const DistillArgs& a, std::ostream& out) {
  KeyValues user = user_config(a.common, {{"teacher", a.teacher},
                                          {"data", a.data},
                                          {"optim.total_steps", a.steps},
                                          {"optim.batch_size", a.batch}});
  if (a.copy_teacher) user.set("copy_teacher", true);
  const std::string teacher_path = user.get("teacher", "");
  if (teacher_path.empty()) throw ConfigError("distill needs --teacher");
  const PixioModel teacher = load_model(teacher_path);

  // the student defaults to the teacher's shape; drop path follows the capacity rule
  KeyValues base;
  KeyValues teacher_kv;
  teacher.config().write(teacher_kv);
  for (const auto& [key, value] : teacher_kv.entries()) {
    if (key != "model.drop_path_rate") base.set(key, value);
  }
  base.merge(user);
  DistillConfig cfg = DistillConfig::read(base);

  KeyValues resolved;
  cfg.write(resolved);
  resolved.set("teacher", teacher_path);
  resolved.set("data", user.get("data", "synthetic:1024"));
  resolved.set("copy_teacher", user.get_bool("copy_teacher", false));
  reject_unknown(user, resolved);

  const fs::path dir = output_dir(a.common, "distill", cfg.seed);
  const Corpus corpus = load_source(resolved.require("data"), cfg.seed, cfg.student.input_size);
  RunResult r;
  if (resolved.get_bool("copy_teacher", false)) {
    Distiller d(teacher, cfg, corpus);
    d.copy_student_from(teacher.params());
    fs::create_directories(dir);
    while (!d.finished()) {
      const StepRecord s = d.step();
      if (s.step % 10 == 0) out << "step " << s.step << " loss " << format_double(s.loss) << '\n';
    }
    r.history = d.history();
    r.checkpoint = dir / "checkpoint.bin";
    save_checkpoint(r.checkpoint, d.snapshot());
    write_metrics(dir / "metrics.tsv", r.history);
  } else {
    const std::size_t every = std::max<std::size_t>(1, cfg.optim.total_steps / 20);
    r = distill(teacher, cfg, corpus, dir, [&](const StepRecord& s) {
      if (s.step % every == 0) out << "step " << s.step << " loss " << format_double(s.loss) << '\n';
    });
  }
  echo_config(dir, resolved);
  if (!r.history.empty()) out << "final loss " << format_double(r.history.back().loss) << '\n';
  out << "checkpoint " << r.checkpoint.string() << '\n';
  return 0;
}

// probes ---------------------------------------------------------------------

struct ProbeArgs {
  Common common;
  std::string checkpoint, task, source, block, blocks, k;
};

struct ProbeSetup {
  KeyValues resolved;
  ProbeSpec spec;
  std::size_t images = 0;
};

ProbeSetup resolve_probe(const KeyValues& user, const std::string& command, const PixioModel& model) {
  ProbeSetup s;
  KeyValues& r = s.resolved;
  r.set("command", command);
  r.set("checkpoint", user.get("checkpoint", ""));
  r.set("seed", static_cast<long long>(seed_of(user)));
  r.set("eval.images", user.get_size("eval.images", 400));
  r.set("probe.source", user.get("probe.source", "cls-mean"));
  r.set("probe.epochs", user.get_size("probe.epochs", 100));
  r.set("probe.lr", user.get_double("probe.lr", 1e-3));
  r.set("probe.weight_decay", user.get_double("probe.weight_decay", 0.0));
  r.set("probe.train_fraction", user.get_double("probe.train_fraction", 0.8));
  r.set("knn.k", user.get_size("knn.k", 10));
  r.set("knn.temperature", user.get_double("knn.temperature", 0.07));
  const std::string default_kind = command == "knn" ? "knn" : "linear";
  r.set("probe.kind", user.get("probe.kind", default_kind));
  const std::size_t depth = model.config().enc_depth;
  if (command == "blockprobe") {
    std::string all;
    for (std::size_t b = 1; b <= depth; ++b) all += (b > 1 ? "," : "") + std::to_string(b);
    r.set("probe.blocks", user.get("probe.blocks", all));
  } else {
    r.set("probe.block", user.get_size("probe.block", depth));
  }
  reject_unknown(user, r);

  const std::string kind = r.get("probe.kind", "knn");
  if (kind == "knn") {
    s.spec.kind = ProbeKind::Knn;
  } else if (kind == "linear") {
    s.spec.kind = ProbeKind::Linear;
  } else if (kind == "depth") {
    s.spec.kind = ProbeKind::Depth;
  } else {
    throw ConfigError("probe.kind must be knn, linear or depth, got '" + kind + "'");
  }
  if (command == "knn" && s.spec.kind != ProbeKind::Knn) throw ConfigError("the knn command only runs k-NN probes");
  s.spec.source = parse_feature_source(r.get("probe.source", "cls-mean"));
  s.spec.knn.k = r.get_size("knn.k", 10);
  s.spec.knn.temperature = r.get_double("knn.temperature", 0.07);
  s.spec.probe.epochs = r.get_size("probe.epochs", 100);
  s.spec.probe.lr = r.get_double("probe.lr", 1e-3);
  s.spec.probe.weight_decay = r.get_double("probe.weight_decay", 0.0);
  s.spec.probe.train_fraction = r.get_double("probe.train_fraction", 0.8);
  s.spec.probe.seed = seed_of(r);
  s.images = r.get_size("eval.images", 400);
  return s;
}

int cmd_probe(const std::string& command, const ProbeArgs& a, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> flags = {
      {"checkpoint", a.checkpoint}, {"probe.kind", a.task}, {"probe.source", a.source}, {"knn.k", a.k}};
  flags.emplace_back(command == "blockprobe" ? "probe.blocks" : "probe.block",
                     command == "blockprobe" ? a.blocks : a.block);
  const KeyValues user = user_config(a.common, flags);
  const PixioModel model = load_model(user.get("checkpoint", ""));
  const ProbeSetup s = resolve_probe(user, command, model);
  const std::uint64_t seed = seed_of(s.resolved);

  std::vector<std::size_t> blocks;
  if (command == "blockprobe") {
    for (const auto& b : s.resolved.get_list("probe.blocks")) {
      try {
        blocks.push_back(std::stoul(b));
      } catch (const std::exception&) {
        throw ConfigError("malformed block index '" + b + "'");
      }
    }
  } else {
    blocks.push_back(s.resolved.get_size("probe.block", model.config().enc_depth));
  }
  const ProbeDataset data = scene_dataset(seed, s.images, model.config().input_size);
  const auto rows = blockwise_probe(model, data, blocks, s.spec);
  const fs::path dir = output_dir(a.common, command, seed);
  echo_config(dir, s.resolved);
  write_probe_report(dir / "probe.tsv", rows, model.config().enc_depth);
  out << probe_report_text(rows, model.config().enc_depth);
  return 0;
}

// reconstruct ----------------------------------------------------------------

struct ReconstructArgs {
  Common common;
  std::string checkpoint, data, count, ratio, granularity;
};

int cmd_reconstruct(const ReconstructArgs& a, std::ostream& out) {
  const KeyValues user = user_config(a.common, {{"checkpoint", a.checkpoint},
                                                {"data", a.data},
                                                {"demo.count", a.count},
                                                {"mask.ratio", a.ratio},
                                                {"mask.granularity", a.granularity}});
  const std::string ckpt_path = user.get("checkpoint", "");
  if (ckpt_path.empty()) throw ConfigError("reconstruct needs --checkpoint");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const PixioModel model = model_from_checkpoint(ckpt);

  KeyValues r;
  r.set("command", "reconstruct");
  r.set("checkpoint", ckpt_path);
  r.set("data", user.get("data", "synthetic:8"));
  r.set("seed", static_cast<long long>(seed_of(user)));
  r.set("demo.count", user.get_size("demo.count", 8));
  r.set("mask.ratio", user.get_double("mask.ratio", ckpt.config.get_double("mask.ratio", 0.75)));
  r.set("mask.granularity", user.get_size("mask.granularity", ckpt.config.get_size("mask.granularity", 2)));
  r.set("norm_target", user.get_bool("norm_target", ckpt.config.get_bool("norm_target", true)));
  reject_unknown(user, r);

  const std::uint64_t seed = seed_of(r);
  const Corpus corpus = load_source(r.require("data"), seed, model.config().input_size);
  const std::size_t count = std::min(corpus.size(), r.get_size("demo.count", 8));
  const std::vector<Image> images(corpus.images.begin(), corpus.images.begin() + static_cast<std::ptrdiff_t>(count));
  const auto panels = reconstruct_demo(model, images, r.get_double("mask.ratio", 0.75),
                                       r.get_size("mask.granularity", 2), seed, r.get_bool("norm_target", true));
  const fs::path dir = output_dir(a.common, "reconstruct", seed);
  echo_config(dir, r);
  for (std::size_t i = 0; i < panels.size(); ++i) {
    std::ostringstream name;
    name << "recon-" << std::setw(3) << std::setfill('0') << i << ".png";
    write_png(dir / name.str(), panels[i].composite());
    out << name.str() << " mae " << format_double(reconstruction_mae(panels[i])) << '\n';
  }
  return 0;
}

// gradcheck ------------------------------------------------------------------

int cmd_gradcheck(const Common& c, std::ostream& out) {
  GradcheckOptions opt;
  opt.seed = c.seed ? static_cast<std::uint64_t>(*c.seed) : 0;
  const GradcheckReport single = pixio::f32::run_gradcheck(opt);
  const GradcheckReport dbl = pixio::f64::run_gradcheck(opt);
  const std::string text = single.summary() + dbl.summary();
  out << text;
  if (!c.out.empty() || std::getenv("PIXIO_OUTPUT_ROOT")) {
    const fs::path dir = output_dir(c, "gradcheck", opt.seed);
    fs::create_directories(dir);
    std::ofstream(dir / "gradcheck.txt", std::ios::trunc) << text;
  }
  return single.passed() && dbl.passed() ? 0 : 1;
}

// sweep ----------------------------------------------------------------------

struct SweepArgs {
  Common common;
  std::vector<std::string> axes;
  std::string data, steps, batch;
};

const std::map<std::string, std::string>& sweep_keys() {
  static const std::map<std::string, std::string> keys = {{"decoder-depth", "model.dec_depth"},
                                                          {"decoder-width", "model.dec_dim"},
                                                          {"mask-ratio", "mask.ratio"},
                                                          {"mask-granularity", "mask.granularity"},
                                                          {"n-cls", "model.n_cls"}};
  return keys;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  if (a.axes.empty()) throw ConfigError("sweep needs at least one --axis name=v1,v2,...");
  if (a.axes.size() > 2) throw ConfigError("sweep takes at most two axes");
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& spec : a.axes) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--axis expects name=v1,v2,..., got '" + spec + "'");
    const std::string name = spec.substr(0, eq);
    if (!sweep_keys().count(name)) {
      throw ConfigError("unknown sweep axis '" + name +
                        "' (decoder-depth, decoder-width, mask-ratio, mask-granularity, n-cls)");
    }
    KeyValues tmp;
    tmp.set("v", spec.substr(eq + 1));
    auto values = tmp.get_list("v");
    if (values.empty()) throw ConfigError("sweep axis '" + name + "' has no values");
    axes.emplace_back(name, std::move(values));
  }

  KeyValues user =
      user_config(a.common, {{"data", a.data}, {"optim.total_steps", a.steps}, {"optim.batch_size", a.batch}});
  const std::size_t eval_images = user.get_size("eval.images", 200);
  KnnConfig knn;
  knn.k = user.get_size("knn.k", knn.k);
  knn.temperature = user.get_double("knn.temperature", knn.temperature);
  knn.validate();
  // probe keys are consumed here, the rest must resolve as pre-training keys
  KeyValues base;
  for (const auto& [k, v] : user.entries()) {
    if (k != "eval.images" && k.rfind("knn.", 0) != 0) base.set(k, v);
  }
  PretrainConfig probe_cfg;
  KeyValues resolved_base = resolve_pretrain(base, probe_cfg);
  resolved_base.set("command", "sweep");
  resolved_base.set("eval.images", eval_images);
  resolved_base.set("knn.k", knn.k);
  resolved_base.set("knn.temperature", knn.temperature);
  std::string axis_text;
  for (const auto& s : a.axes) axis_text += (axis_text.empty() ? "" : " ") + s;
  resolved_base.set("sweep.axes", axis_text);

  const fs::path dir = output_dir(a.common, "sweep", probe_cfg.seed);
  echo_config(dir, resolved_base);
  const Corpus corpus = load_source(resolved_base.require("data"), probe_cfg.seed, probe_cfg.model.input_size);

  std::vector<std::vector<std::string>> combos = {{}};
  for (const auto& [name, values] : axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& c : combos) {
      for (const auto& v : values) {
        auto e = c;
        e.push_back(v);
        next.push_back(std::move(e));
      }
    }
    combos = std::move(next);
  }

  std::ostringstream report;
  for (const auto& [name, values] : axes) report << name << '\t';
  report << "final_loss\tknn_accuracy\n";
  for (const auto& combo : combos) {
    KeyValues kv = base;
    std::string label;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      kv.set(sweep_keys().at(axes[i].first), combo[i]);
      label += (label.empty() ? "" : "_") + axes[i].first + "-" + combo[i];
    }
    PretrainConfig cfg;
    resolve_pretrain(kv, cfg);
    cfg.validate();
    const RunResult r = pretrain(cfg, corpus, dir / label);
    const std::size_t tail = std::max<std::size_t>(1, r.history.size() / 10);
    double final_loss = 0.0;
    for (std::size_t i = r.history.size() - tail; i < r.history.size(); ++i) final_loss += r.history[i].loss;
    final_loss /= static_cast<double>(tail);

    const PixioModel model = model_from_checkpoint(load_checkpoint(r.checkpoint));
    const ProbeDataset data = scene_dataset(cfg.seed, eval_images, cfg.model.input_size);
    ProbeSpec spec;
    spec.probe.seed = cfg.seed;
    spec.knn = knn;
    const ProbeMetrics m = run_probe(model, data, cfg.model.enc_depth, spec);
    for (const auto& v : combo) report << v << '\t';
    report << format_double(final_loss) << '\t' << format_double(m.accuracy) << '\n';
    out << label << " final_loss " << format_double(final_loss) << " knn_accuracy " << format_double(m.accuracy)
        << '\n';
  }
  std::ofstream(dir / "sweep.tsv", std::ios::trunc) << report.str();
  out << report.str();
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pixio masked-autoencoder pre-training, curation, distillation and evaluation", "pixio"};
  app.require_subcommand(1);

  PretrainArgs pa;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "masked-reconstruction pre-training");
  add_common(pretrain_cmd, pa.common);
  pretrain_cmd->add_option("--data", pa.data, "synthetic:N or an image directory / packed corpus");
  pretrain_cmd->add_option("--steps", pa.steps, "total optimizer steps");
  pretrain_cmd->add_option("--batch", pa.batch, "batch size");

  CurateArgs ca;
  auto* curate_cmd = app.add_subcommand("curate", "loss-based soft sampling with an entropy filter");
  add_common(curate_cmd, ca.common);
  curate_cmd->add_option("--checkpoint", ca.checkpoint, "frozen scoring model");
  curate_cmd->add_option("--data", ca.data, "candidate corpus");
  curate_cmd->add_option("--threshold", ca.threshold, "colour entropy threshold in bits");

  DistillArgs da;
  auto* distill_cmd = app.add_subcommand("distill", "feature distillation into a student encoder");
  add_common(distill_cmd, da.common);
  distill_cmd->add_option("--teacher", da.teacher, "teacher checkpoint");
  distill_cmd->add_option("--data", da.data, "training corpus");
  distill_cmd->add_option("--steps", da.steps, "total optimizer steps");
  distill_cmd->add_option("--batch", da.batch, "batch size");
  distill_cmd->add_flag("--copy-teacher", da.copy_teacher, "initialize the student from the teacher");

  ProbeArgs probe_args, knn_args, block_args;
  auto* probe_cmd = app.add_subcommand("probe", "linear probe on frozen features");
  add_common(probe_cmd, probe_args.common);
  probe_cmd->add_option("--checkpoint", probe_args.checkpoint, "model checkpoint");
  probe_cmd->add_option("--task", probe_args.task, "linear (classification) or depth");
  probe_cmd->add_option("--source", probe_args.source, "cls-mean or patch-concat-cls");
  probe_cmd->add_option("--block", probe_args.block, "encoder block (1-based)");

  auto* knn_cmd = app.add_subcommand("knn", "k-NN classification on frozen features");
  add_common(knn_cmd, knn_args.common);
  knn_cmd->add_option("--checkpoint", knn_args.checkpoint, "model checkpoint");
  knn_cmd->add_option("--k", knn_args.k, "neighbours");
  knn_cmd->add_option("--source", knn_args.source, "cls-mean or patch-concat-cls");
  knn_cmd->add_option("--block", knn_args.block, "encoder block (1-based)");

  auto* block_cmd = app.add_subcommand("blockprobe", "probe the features after several encoder blocks");
  add_common(block_cmd, block_args.common);
  block_cmd->add_option("--checkpoint", block_args.checkpoint, "model checkpoint");
  block_cmd->add_option("--task", block_args.task, "knn, linear or depth");
  block_cmd->add_option("--source", block_args.source, "cls-mean or patch-concat-cls");
  block_cmd->add_option("--blocks", block_args.blocks, "comma-separated block indices");

  ReconstructArgs ra;
  auto* recon_cmd = app.add_subcommand("reconstruct", "masked input / reconstruction / ground truth panels");
  add_common(recon_cmd, ra.common);
  recon_cmd->add_option("--checkpoint", ra.checkpoint, "model checkpoint");
  recon_cmd->add_option("--data", ra.data, "images to reconstruct");
  recon_cmd->add_option("--count", ra.count, "number of images");
  recon_cmd->add_option("--ratio", ra.ratio, "mask ratio");
  recon_cmd->add_option("--granularity", ra.granularity, "mask block edge in patches");

  Common gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every kernel op");
  add_common(grad_cmd, gc);

  SweepArgs sa;
  auto* sweep_cmd = app.add_subcommand("sweep", "pre-train over a grid of one or two axes and probe each run");
  add_common(sweep_cmd, sa.common);
  sweep_cmd->add_option("--axis", sa.axes, "name=v1,v2,... with name in decoder-depth, decoder-width, "
                                            "mask-ratio, mask-granularity, n-cls")
      ->required();
  sweep_cmd->add_option("--data", sa.data, "training corpus");
  sweep_cmd->add_option("--steps", sa.steps, "total optimizer steps per run");
  sweep_cmd->add_option("--batch", sa.batch, "batch size");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*pretrain_cmd) return cmd_pretrain(pa, out);
    if (*curate_cmd) return cmd_curate(ca, out);
    if (*distill_cmd) return cmd_distill(da, out);
    if (*probe_cmd) return cmd_probe("probe", probe_args, out);
    if (*knn_cmd) return cmd_probe("knn", knn_args, out);
    if (*block_cmd) return cmd_probe("blockprobe", block_args, out);
    if (*recon_cmd) return cmd_reconstruct(ra, out);
    if (*grad_cmd) return cmd_gradcheck(gc, out);
    if (*sweep_cmd) return cmd_sweep(sa, out);
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

int cli_main(int argc, char** argv) {
  tune_allocator();
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace pixio
