#include <doctest.h>

#include <fstream>
#include <sstream>

#include "deepdtf/cli.hpp"
#include "deepdtf/error.hpp"
#include "deepdtf/synthetic.hpp"
#include "scratch_dir.hpp"

using namespace deepdtf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

const char* kTinyModel =
    "d=16\ntokens_per_modality=2\nconv_channels=2\nomics_layers=1\nomics_heads=2\ndrug_layers=1\n"
    "drug_heads=2\nfusion_layers=1\nfusion_heads=2\ngnn_layers=2\nhead_hidden=16\ndropout=0\n";

// Synthetic cohort written to disk and prepared into `dir`.
void prepared(const testing::ScratchDir& dir, const synthetic::Options& opt = {}) {
  synthetic::write_inputs(synthetic::make_dataset(opt), dir / "raw");
  const Outcome o = run_cli({"prepare", "--manifest", (dir / "raw/manifest.txt").string(), "--min-cells-per-type", "1",
                         "--out", dir.path().string()});
  REQUIRE_MESSAGE(o.code == 0, o.err);
}

}  // namespace

TEST_CASE("config keys: defaults, file, flags and validation") {
  cli::RunConfig cfg;
  CHECK(cfg.count("epochs") == 60);
  CHECK(cfg.count("batch_size") == 256);
  CHECK(cfg.real("lr") == 1e-3);
  CHECK(cfg.real("weight_decay") == 3e-4);
  CHECK(cfg.real("gamma") == 2.0);
  cfg.merge_text("# comment\nepochs = 7  # trailing\n\nmodalities=mut+cnv\n", "t");
  CHECK(cfg.count("epochs") == 7);
  CHECK(cfg.training().modalities.size() == 2);
  CHECK_THROWS_AS(cfg.merge_text("epoch=3\n", "t"), ConfigError);
  CHECK_THROWS_AS(cfg.merge_text("epochs\n", "t"), ConfigError);
  cfg.set("lr", "abc");
  CHECK_THROWS_AS(cfg.training(), ConfigError);
  cfg.set("lr", "1e-3");
  cfg.set("activation", "tanh");
  CHECK_THROWS_AS(cfg.model(), ConfigError);

  // Resolved text lists every key once and reads back to the same config.
  cli::RunConfig back;
  back.merge_text(cfg.text(), "resolved");
  CHECK(back.text() == cfg.text());
  const std::string text = cfg.text();
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(cli::config_keys().size()));
}

TEST_CASE("parse-smiles and usage errors") {
  Outcome o = run_cli({"parse-smiles", "c1ccccc1"});
  REQUIRE(o.code == 0);
  const auto j = nlohmann::json::parse(o.out);
  CHECK(j["num_nodes"] == 6);
  CHECK(j["num_edges"] == 12);
  CHECK(j["graph"]["nodes"].size() == 6);

  CHECK(run_cli({"parse-smiles", "C1CC"}).code == 3);
  CHECK(run_cli({}).code == 2);
  CHECK(run_cli({"train", "--no-such-flag"}).code == 2);
  CHECK(run_cli({"--help"}).code == 0);
  CHECK(run_cli({"eval"}).code == 2);  // --checkpoint is required

  testing::ScratchDir dir("cli_usage");
  o = run_cli({"split", "--out", dir.path().string()});
  CHECK(o.code == 5);
  CHECK(o.err.find("deepdtf prepare") != std::string::npos);
  CHECK(run_cli({"prepare", "--out", dir.path().string()}).code == 2);
  CHECK(run_cli({"prepare", "--config", (dir / "missing.cfg").string()}).code == 5);
  spit(dir / "bad.cfg", "not_a_key=1\n");
  CHECK(run_cli({"split", "--config", (dir / "bad.cfg").string()}).code == 2);
}

TEST_CASE("prepare and split write bundles, stats and run records") {
  testing::ScratchDir dir("cli_prepare");
  prepared(dir);
  const auto stats = nlohmann::json::parse(slurp(dir / "stats.json"));
  CHECK(stats["pairs"] == 64);
  CHECK(stats["cells"] == 8);
  CHECK(stats["drugs"] == 8);
  CHECK(fs::exists(dir / "dataset.cbor"));
  CHECK(slurp(dir / "prepare_config.txt").find("min_cells_per_type=1\n") != std::string::npos);
  const auto rec = nlohmann::json::parse(slurp(dir / "prepare_inputs.json"));
  CHECK(rec["inputs"].contains("manifest"));
  CHECK(rec["inputs"]["ge"]["sha256"].get<std::string>().size() == 64);

  REQUIRE(run_cli({"split", "--k", "2", "--seed", "3", "--out", dir.path().string()}).code == 0);
  const auto folds = nlohmann::json::parse(slurp(dir / "folds.json"));
  CHECK(folds["k"] == 2);
  const std::string first = slurp(dir / "folds.json");
  REQUIRE(run_cli({"split", "--k", "2", "--seed", "3", "--out", dir.path().string()}).code == 0);
  CHECK(slurp(dir / "folds.json") == first);
}

TEST_CASE("train twice with the same seed gives byte-identical outputs") {
  testing::ScratchDir dir("cli_train");
  prepared(dir);
  REQUIRE(run_cli({"split", "--k", "2", "--seed", "1", "--out", dir.path().string()}).code == 0);
  spit(dir / "run.cfg", std::string(kTinyModel) + "epochs=3\nbatch_size=16\nseed=5\n");
  auto train = [&](const std::string& name, const std::vector<std::string>& extra) {
    std::vector<std::string> args{"train",    "--config", (dir / "run.cfg").string(),      "--dataset",
                                  (dir / "dataset.cbor").string(), "--folds", (dir / "folds.json").string(),
                                  "--out",    (dir / name).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
  };
  Outcome a = train("a", {"--seed", "7"});
  REQUIRE_MESSAGE(a.code == 0, a.err);
  Outcome b = train("b", {"--seed", "7"});
  REQUIRE(b.code == 0);
  for (const char* f : {"results.json", "metrics.csv", "fold0/model.ckpt", "fold1/log.csv", "fold1/predictions.csv",
                        "train_config.txt"})
    CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
  CHECK(slurp(dir / "a/train_config.txt").find("seed=7\n") != std::string::npos);  // flag beats file
  CHECK(slurp(dir / "a/train_config.txt").find("epochs=3\n") != std::string::npos);  // file beats default

  const auto results = nlohmann::json::parse(slurp(dir / "a/results.json"));
  CHECK(results["folds"].size() == 2);
  CHECK(results["seed"] == 7);
  CHECK(results["data_sha256"].contains("folds"));

  Outcome c = train("c", {"--seed", "8"});
  REQUIRE(c.code == 0);
  CHECK(slurp(dir / "a/results.json") != slurp(dir / "c/results.json"));

  // Each fold checkpoint evaluates on its own held-out cell lines.
  Outcome e = run_cli({"eval", "--checkpoint", (dir / "a/fold0/model.ckpt").string(), "--dataset",
                   (dir / "dataset.cbor").string(), "--out", (dir / "e").string()});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  const auto m = nlohmann::json::parse(slurp(dir / "e/eval_metrics.json"));
  CHECK(m["metrics"]["rmse"].get<double>() ==
        doctest::Approx(results["folds"][0]["test"]["rmse"].get<double>()).epsilon(1e-12));
}

TEST_CASE("eval on the 64-pair synthetic checkpoint and explain it") {
  testing::ScratchDir dir("cli_full");
  prepared(dir);
  spit(dir / "run.cfg", std::string(kTinyModel) + "protocol=full\nepochs=1000\nbatch_size=64\nweight_decay=0\nseed=7\n");
  Outcome t = run_cli({"train", "--config", (dir / "run.cfg").string(), "--out", dir.path().string()});
  REQUIRE_MESSAGE(t.code == 0, t.err);
  REQUIRE(fs::exists(dir / "full/model.ckpt"));

  Outcome e = run_cli({"eval", "--checkpoint", (dir / "full/model.ckpt").string(), "--scope", "all", "--out",
                   (dir / "eval").string(), "--dataset", (dir / "dataset.cbor").string()});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  const auto m = nlohmann::json::parse(slurp(dir / "eval/eval_metrics.json"));
  MESSAGE("64-pair checkpoint: " << m["metrics"].dump());
  CHECK(m["metrics"]["rmse"].get<double>() < 0.15);
  CHECK(m["metrics"]["n"] == 64);
  CHECK(fs::exists(dir / "eval/eval_config.txt"));

  spit(dir / "sets.gmt", synthetic::to_gmt({{"FIRST", {"G0", "G1", "G2"}}, {"LAST", {"G3", "G4", "G5"}}}));
  Outcome x = run_cli({"explain", "--checkpoint", (dir / "full/model.ckpt").string(), "--dataset",
                   (dir / "dataset.cbor").string(), "--gene-sets", (dir / "sets.gmt").string(), "--gsea-min-size", "3",
                   "--gsea-permutations", "200", "--samples-per-cell", "2", "--drugs", "D0,D1", "--out",
                   (dir / "explain").string()});
  REQUIRE_MESSAGE(x.code == 0, x.err);
  const auto rep = nlohmann::json::parse(slurp(dir / "explain/report.json"));
  CHECK(rep["attributions"].size() == 4);
  CHECK(rep["groups"].size() == 6);
  CHECK(rep["gsea"]["results"].size() == 2);
  for (const char* f : {"pathways.csv", "genes_positive.csv", "genes_negative.csv", "attributions.csv",
                        "explain_inputs.json"})
    CHECK(fs::exists(dir / "explain" / f));

  CHECK(run_cli({"explain", "--checkpoint", (dir / "full/model.ckpt").string(), "--dataset",
             (dir / "dataset.cbor").string(), "--drugs", "NOPE", "--out", (dir / "x2").string()})
            .code == 3);
  CHECK(run_cli({"eval", "--checkpoint", (dir / "none.ckpt").string(), "--out", dir.path().string()}).code == 5);
}

TEST_CASE("exit codes by error category") {
  CHECK(exit_code(ErrorKind::kUsage) == 2);
  CHECK(exit_code(ErrorKind::kConfig) == 2);
  CHECK(exit_code(ErrorKind::kData) == 3);
  CHECK(exit_code(ErrorKind::kParse) == 3);
  CHECK(exit_code(ErrorKind::kNumeric) == 4);
  CHECK(exit_code(ErrorKind::kIo) == 5);
}
