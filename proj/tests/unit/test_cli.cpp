#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pixio/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = pixio::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("pixio-cli-" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

const std::vector<std::string> kTinyModel = {
    "--set", "model.input_size=16", "--set", "model.patch=4",     "--set", "model.enc_dim=16",
    "--set", "model.enc_depth=2",   "--set", "model.enc_heads=2", "--set", "model.dec_dim=8",
    "--set", "model.dec_depth=1",   "--set", "model.dec_heads=2", "--set", "model.n_cls=2"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTinyModel.begin(), kTinyModel.end());
  return args;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("no subcommand prints usage and fails") {
    const Outcome o = run({});
    CHECK(o.code != 0);
    CHECK(o.err.find("pretrain") != std::string::npos);
    CHECK(run({"frobnicate"}).code != 0);
  }

  TEST_CASE("the installed binary exits nonzero on bad usage") {
    const std::string cmd = std::string(PIXIO_BINARY) + " --no-such-flag > /dev/null 2>&1";
    CHECK(std::system(cmd.c_str()) != 0);
  }

  TEST_CASE("unknown configuration keys are rejected") {
    const Outcome o = run(with_tiny({"pretrain", "--data", "synthetic:8", "--steps", "2", "--batch", "2", "--set",
                                     "model.enc_dimm=5", "--out", scratch("unknown").string()}));
    CHECK(o.code == 1);
    CHECK(o.err.find("model.enc_dimm") != std::string::npos);
  }

  TEST_CASE("pretrain twice with the same seed writes identical artifacts") {
    const fs::path a = scratch("det-a"), b = scratch("det-b");
    for (const fs::path& dir : {a, b}) {
      const Outcome o = run(with_tiny({"pretrain", "--data", "synthetic:12", "--steps", "4", "--batch", "3",
                                       "--seed", "7", "--out", dir.string()}));
      REQUIRE_MESSAGE(o.code == 0, o.err);
    }
    CHECK(slurp(a / "checkpoint.bin") == slurp(b / "checkpoint.bin"));
    CHECK(slurp(a / "metrics.tsv") == slurp(b / "metrics.tsv"));
    CHECK(slurp(a / "config.cfg").find("seed = 7") != std::string::npos);
  }

  TEST_CASE("pretrain then curate, probe, knn, blockprobe and reconstruct") {
    const fs::path base = scratch("chain");
    REQUIRE(run(with_tiny({"pretrain", "--data", "synthetic:16", "--steps", "3", "--batch", "4", "--out",
                           (base / "pre").string()}))
                .code == 0);
    const std::string ckpt = (base / "pre" / "checkpoint.bin").string();

    Outcome o = run({"curate", "--checkpoint", ckpt, "--data", "synthetic:30", "--threshold", "1.0", "--out",
                     (base / "cur").string()});
    CHECK_MESSAGE(o.code == 0, o.err);
    CHECK(fs::exists(base / "cur" / "curation.tsv"));
    CHECK(fs::exists(base / "cur" / "summary.cfg"));

    o = run({"knn", "--checkpoint", ckpt, "--k", "3", "--set", "eval.images=24", "--out", (base / "knn").string()});
    CHECK_MESSAGE(o.code == 0, o.err);
    CHECK(o.out.find("accuracy") != std::string::npos);

    o = run({"probe", "--checkpoint", ckpt, "--task", "depth", "--set", "eval.images=8", "--set", "probe.epochs=5",
             "--out", (base / "probe").string()});
    CHECK_MESSAGE(o.code == 0, o.err);
    CHECK(slurp(base / "probe" / "probe.tsv").find("delta1") != std::string::npos);

    o = run({"blockprobe", "--checkpoint", ckpt, "--task", "knn", "--blocks", "1,2", "--set", "eval.images=24",
             "--set", "knn.k=3", "--out", (base / "blocks").string()});
    CHECK_MESSAGE(o.code == 0, o.err);
    CHECK(o.out.find("2\t1\taccuracy") != std::string::npos);

    o = run({"reconstruct", "--checkpoint", ckpt, "--data", "synthetic:2", "--count", "2", "--out",
             (base / "recon").string()});
    CHECK_MESSAGE(o.code == 0, o.err);
    CHECK(fs::exists(base / "recon" / "recon-001.png"));

    o = run({"distill", "--teacher", ckpt, "--data", "synthetic:8", "--steps", "2", "--batch", "2", "--copy-teacher",
             "--out", (base / "distill").string()});
    CHECK_MESSAGE(o.code == 0, o.err);
    CHECK(fs::exists(base / "distill" / "checkpoint.bin"));
  }

  TEST_CASE("sweep over three decoder depths reports three rows") {
    const fs::path dir = scratch("sweep");
    const Outcome o = run(with_tiny({"sweep", "--axis", "decoder-depth=1,2,3", "--data", "synthetic:12", "--steps",
                                     "2", "--batch", "3", "--set", "eval.images=16", "--set", "knn.k=3", "--out",
                                     dir.string()}));
    REQUIRE_MESSAGE(o.code == 0, o.err);
    std::istringstream rows(slurp(dir / "sweep.tsv"));
    std::string line;
    int n = 0;
    while (std::getline(rows, line)) ++n;
    CHECK(n == 4);  // header plus one row per depth
  }

  TEST_CASE("gradcheck passes in both precisions") {
    const fs::path dir = scratch("grad");
    const Outcome o = run({"gradcheck", "--out", dir.string()});
    CHECK_MESSAGE(o.code == 0, o.out);
    CHECK(o.out.find("FAIL") == std::string::npos);
    CHECK(fs::exists(dir / "gradcheck.txt"));
  }
}
