#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "doctest.h"
#include "sinesr/cli.hpp"
#include "sinesr/errors.hpp"
#include "sinesr/image_io.hpp"
#include "sinesr/training.hpp"

using namespace sinesr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sinesr_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "sinesr");
  return cli::run(args);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct CoutCapture {
  std::ostringstream buf;
  std::streambuf* old = std::cout.rdbuf(buf.rdbuf());
  ~CoutCapture() { std::cout.rdbuf(old); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("degrade is byte-identical across runs with the same seed") {
  const auto dir = scratch("degrade");
  Rng rng(1);
  write_png(dir / "a.png", synthetic_image(32, 32, rng));
  write_png(dir / "b.png", synthetic_image(40, 36, rng));
  for (const char* out : {"o1", "o2"}) {
    REQUIRE(run({"degrade", "--seed", "4", "--out", (dir / out).string(), "--set",
                 "data.input=" + dir.string(), "--set", "degradation.sigma=8"}) ==
            cli::kExitOk);
  }
  for (const char* f : {"a.png", "b.png"}) {
    CHECK(slurp(dir / "o1" / f) == slurp(dir / "o2" / f));
    CHECK(read_image(dir / "o1" / f).shape() == (f[0] == 'a' ? Shape{1, 3, 8, 8} : Shape{1, 3, 10, 9}));
  }
  CHECK(fs::exists(dir / "o1" / "resolved_config.json"));
  const auto resolved = nlohmann::json::parse(slurp(dir / "o1" / "resolved_config.json"));
  CHECK(resolved.at("seed") == 4);
  CHECK(resolved.at("degradation").at("sigma") == 8);
  fs::remove_all(dir);
}

TEST_CASE("evaluate writes one csv row per pair and a summary") {
  const auto dir = scratch("evaluate");
  Rng rng(2);
  std::vector<fs::path> hr;
  for (int i = 0; i < 3; ++i) {
    hr.push_back(dir / ("hr" + std::to_string(i) + ".png"));
    write_png(hr.back(), synthetic_image(64, 64, rng));
  }
  PairSynthesizer synth;
  REQUIRE(synthesize_pairs(hr, synth, 0, dir / "pairs") == 3);
  REQUIRE(run({"evaluate", "--out", (dir / "eval").string(), "--set", "evaluation.checkpoint=bicubic",
               "--set", "data.eval_manifest=" + (dir / "pairs" / "manifest.jsonl").string()}) ==
          cli::kExitOk);
  std::ifstream csv(dir / "eval" / "metrics.csv");
  int lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  CHECK(lines == 4);
  const auto summary = nlohmann::json::parse(slurp(dir / "eval" / "summary.json"));
  CHECK(summary.at("count") == 3);
  fs::remove_all(dir);
}

TEST_CASE("evaluate pairs LR and HR directories by file stem") {
  const auto dir = scratch("evaluate_dirs");
  fs::create_directories(dir / "lr");
  fs::create_directories(dir / "hr");
  Rng rng(4);
  for (const char* stem : {"a", "b"}) {
    const Image hr = synthetic_image(32, 32, rng);
    write_png(dir / "hr" / (std::string(stem) + ".png"), hr);
    write_png(dir / "lr" / (std::string(stem) + ".png"), resize_bicubic(hr, 0.25));
  }
  write_png(dir / "lr" / "orphan.png", Image(1, 3, 8, 8, 10.0f));
  REQUIRE(run({"evaluate", "--out", (dir / "eval").string(), "--set", "evaluation.checkpoint=bicubic",
               "--set", "data.root=" + dir.string(), "--set", "data.eval_lr_dir=lr", "--set",
               "data.eval_hr_dir=hr"}) == cli::kExitOk);
  const auto summary = nlohmann::json::parse(slurp(dir / "eval" / "summary.json"));
  CHECK(summary.at("count") == 2);
  CHECK(run({"evaluate", "--out", (dir / "e2").string(), "--set", "evaluation.checkpoint=bicubic",
             "--set", "data.eval_lr_dir=" + (dir / "lr").string(), "--set",
             "data.eval_hr_dir=" + (dir / "missing").string()}) == cli::kExitData);
  fs::remove_all(dir);
}

TEST_CASE("infer with and without self-ensemble agree on a constant image") {
  const auto dir = scratch("infer");
  SRTrainConfig c;
  c.generator.features = 8;
  c.generator.num_blocks = 1;
  c.lr_patch = 8;
  c.batch = 2;
  c.iterations = 2;
  c.loss_mode = SRLossMode::kContent;
  c.schedule.total_iterations = 2;
  Rng rng(3);
  std::vector<ImagePair> pairs{make_pair(synthetic_image(48, 48, rng), PairSynthesizer{}, 0)};
  SRStageTrainer(c, pairs, dir / "model").train();
  write_png(dir / "flat.png", Image(1, 3, 20, 20, 120.0f));
  for (const bool ens : {false, true}) {
    std::vector<std::string> args{"infer", "--out", (dir / (ens ? "ens" : "one")).string(),
                                  "--set", "inference.checkpoint=" + (dir / "model" / "final.ckpt").string(),
                                  "--set", "data.input=" + (dir / "flat.png").string()};
    if (ens) args.push_back("--self-ensemble");
    REQUIRE(run(args) == cli::kExitOk);
  }
  CHECK(read_image(dir / "one" / "flat.png").shape() == Shape{1, 3, 80, 80});
  CHECK(slurp(dir / "one" / "flat.png") == slurp(dir / "ens" / "flat.png"));
  fs::remove_all(dir);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("exit");
  const auto out = (dir / "o").string();
  CHECK(run({"degrade", "--out", out, "--set", "degradation.bogus=1"}) == cli::kExitConfig);
  CHECK(run({"degrade", "--out", out, "--set", "data.input=" + (dir / "missing").string()}) ==
        cli::kExitData);
  CHECK(run({"infer", "--out", out, "--device", "cuda"}) == cli::kExitConfig);
  CHECK(run({"degrade", "--out", out, "--frobnicate"}) == cli::kExitConfig);
  CHECK(run({"infer", "--out", out}) == cli::kExitConfig);
  CHECK(run({"degrade", "--out", out, "--config", (dir / "none.json").string()}) == cli::kExitConfig);
  std::ofstream(dir / "bad.json") << "{\"lr_stage\": {\"unknown\": 1}}";
  CHECK(run({"train-lr", "--out", out, "--config", (dir / "bad.json").string()}) == cli::kExitConfig);
  fs::remove_all(dir);
}

TEST_CASE("help lists every configuration key") {
  CoutCapture cap;
  CHECK(run({"--help"}) == cli::kExitOk);
  const std::string text = cap.buf.str();
  for (const auto& line : cli::describe_config()) {
    CHECK_MESSAGE(text.find(line) != std::string::npos, line);
  }
  for (const char* cmd : {"train-lr", "synth-pairs", "train-sr", "infer", "evaluate", "degrade"}) {
    CHECK(text.find(cmd) != std::string::npos);
  }
}

TEST_CASE("resolve_config merges files and overrides") {
  const auto cfg = cli::resolve_config({{"sr_stage", {{"batch", 4}}}},
                                       {"sr_stage.lr_patch=16", "data.root=\"/x\"", "data.hr_dir=plain"});
  CHECK(cfg.at("sr_stage").at("batch") == 4);
  CHECK(cfg.at("sr_stage").at("lr_patch") == 16);
  CHECK(cfg.at("data").at("root") == "/x");
  CHECK(cfg.at("data").at("hr_dir") == "plain");
  CHECK(cfg.at("lr_stage") == cli::default_config().at("lr_stage"));
  CHECK_THROWS_AS(cli::resolve_config({{"nope", 1}}, {}), ConfigError);
  CHECK_THROWS_AS(cli::resolve_config({}, {"sr_stage.lr_patch"}), ConfigError);
  CHECK_THROWS_AS(cli::resolve_config({}, {"sr_stage.lr_patch=-3"}), ConfigError);
}

}  // TEST_SUITE
