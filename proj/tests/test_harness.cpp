#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "checkpoint.hpp"
#include "harness.hpp"

using namespace smr;
namespace fs = std::filesystem;

namespace {

RunConfig tinyRun(const std::string& dir) {
  RunConfig c;
  c.model.d = 16;
  c.model.nHeads = 2;
  c.model.nEncLayers = 1;
  c.model.nDet = 6;
  c.model.nLearned = 2;
  c.model.gridSize = 4;
  c.model.imageSize = 16;
  c.model.channels = 1;
  c.scene.numObjects = 2;
  c.scene.numFrames = 4;
  c.scene.imageSize = 16;
  c.scene.channels = 1;
  c.train.nClip = 2;
  c.train.epochs = 2;
  c.trainSeeds = {1};
  c.valSeeds = {50};
  c.valFrames = 4;
  c.outDir = dir;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("run config JSON round trip preserves every field") {
  RunConfig c = tinyRun("/tmp/x");
  c.model.cProp = 0.17;
  c.train.recipe = Recipe::Distill;
  c.train.distillWeight = 0.75;
  c.tracker.tReid = 7;
  c.scene.occlusions = {{5, 1, 2}};
  c.scene.lifetimes = {{0, 4}, {1, 3}};
  c.disableTrackQueriesAtInference = true;
  RunConfig back = runConfigFromJson(toJson(c));
  CHECK(back == c);
  CHECK(back.scene.occlusions.size() == 1);
  CHECK(back.scene.lifetimes[1].second == 3);
  CHECK(back.train.recipe == Recipe::Distill);
}

TEST_CASE("partial config inherits defaults; unknown keys are rejected") {
  RunConfig c = runConfigFromJson(nlohmann::json::parse(
      R"({"model": {"d": 32}, "train": {"epochs": 3}})"));
  CHECK(c.model.d == 32);
  CHECK(c.model.nHeads == ModelConfig{}.nHeads);
  CHECK(c.train.epochs == 3);
  CHECK(c.train.lambdaProp == 0.5);
  CHECK(c.tracker.tauEn == 0.5);
  CHECK_THROWS_AS(runConfigFromJson(nlohmann::json::parse(R"({"bogus": 1})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      runConfigFromJson(nlohmann::json::parse(R"({"model": {"dd": 1}})")),
      std::invalid_argument);
}

TEST_CASE("checkpoint round trip restores weights and configuration") {
  TempDir dir("smr_ckpt_test");
  fs::create_directories(dir.path);
  ModelConfig mc = tinyRun("").model;
  Model a(mc, 42);
  std::string base = (dir.path / "ck").string();
  saveCheckpoint(base, a);

  Model b = loadCheckpoint(base);
  CHECK(b.config().d == mc.d);
  REQUIRE(a.params().size() == b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params()[i].name == b.params()[i].name);
    CHECK(a.params()[i].tensor.data() == b.params()[i].tensor.data());
  }

  Model c(mc, 43);
  loadCheckpointInto(base, c);
  CHECK(c.findParam("head.score.w")->data() ==
        a.findParam("head.score.w")->data());

  ModelConfig other = mc;
  other.nDet = 5;
  Model d(other, 1);
  CHECK_THROWS_AS(loadCheckpointInto(base, d), std::runtime_error);
  CHECK_THROWS_AS(loadCheckpoint((dir.path / "missing").string()),
                  std::runtime_error);
}

TEST_CASE("dry-run validates and writes nothing; bad config throws") {
  TempDir dir("smr_dry_test");
  RunConfig c = tinyRun((dir.path / "run").string());
  cmdTrain(c, /*dryRun=*/true);
  CHECK(!fs::exists(dir.path / "run"));

  RunConfig bad = c;
  bad.valSeeds = {1};  // collides with train seed
  CHECK_THROWS_AS(cmdTrain(bad, true), std::invalid_argument);
  bad = c;
  bad.model.nHeads = 3;
  CHECK_THROWS_AS(cmdTrain(bad, true), std::invalid_argument);
}

TEST_CASE("train command writes its artifacts and is seed-deterministic") {
  TempDir dir("smr_train_test");
  RunConfig c = tinyRun((dir.path / "a").string());
  c.train.recipe = Recipe::SelfProposal;
  TrainArtifacts a = cmdTrain(c);
  for (const char* f : {"config.json", "log.jsonl", "checkpoint.json",
                        "checkpoint.bin", "metrics.json", "manifest.json"})
    CHECK(fs::exists(fs::path(c.outDir) / f));
  REQUIRE(a.log.size() == 2);

  // every epoch record carries both loss terms
  std::ifstream log(fs::path(c.outDir) / "log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("loss_motr"));
    CHECK(j.contains("loss_prop"));
    CHECK(j["loss_prop"].get<double>() > 0);
    lines++;
  }
  CHECK(lines == 2);

  RunConfig c2 = c;
  c2.outDir = (dir.path / "b").string();
  cmdTrain(c2);
  CHECK(slurp(fs::path(c.outDir) / "metrics.json") ==
        slurp(fs::path(c2.outDir) / "metrics.json"));
  CHECK(slurp(fs::path(c.outDir) / "log.jsonl") ==
        slurp(fs::path(c2.outDir) / "log.jsonl"));

  // eval on the stored checkpoint reproduces the stored metrics
  RunConfig ec = c;
  ec.outDir = (dir.path / "eval").string();
  MetricsReport m = cmdEval(ec, a.checkpointBase);
  CHECK(m.toJson() == slurp(fs::path(c.outDir) / "metrics.json"));
  CHECK(fs::exists(fs::path(ec.outDir) / "tracking_val0.csv"));
}

TEST_CASE("conflict probe on an untrained model reports near-zero APs") {
  TempDir dir("smr_conflict_test");
  RunConfig c = tinyRun((dir.path / "run").string());
  fs::create_directories(dir.path);
  Model m(c.model, 5);
  std::string base = (dir.path / "fresh").string();
  saveCheckpoint(base, m);
  ConflictReport rep = cmdConflict(c, base);
  CHECK(rep.apWith <= 0.05);
  CHECK(rep.apWithout <= 0.05);
  CHECK(fs::exists(fs::path(c.outDir) / "conflict.json"));
}

TEST_CASE("profile asserts the 1:2 encoder/decoder contract") {
  TempDir dir("smr_profile_test");
  RunConfig c = tinyRun((dir.path / "run").string());
  c.valFrames = 6;
  ProfileReport rep = cmdProfile(c);
  CHECK(rep.frames == 6);
  CHECK(rep.encoderInvocations == 6);
  CHECK(rep.decoderInvocations == 12);
  CHECK(rep.fpsSelfProposal > 0);
  CHECK(rep.fpsBaseline > 0);
}

TEST_CASE("gen-data writes one GT csv per seed plus a summary") {
  TempDir dir("smr_gendata_test");
  RunConfig c = tinyRun((dir.path / "run").string());
  c.trainSeeds = {1, 2};
  c.valSeeds = {50};
  cmdGenData(c);
  CHECK(fs::exists(fs::path(c.outDir) / "train_seed1.csv"));
  CHECK(fs::exists(fs::path(c.outDir) / "train_seed2.csv"));
  CHECK(fs::exists(fs::path(c.outDir) / "val_seed50.csv"));
  auto j = nlohmann::json::parse(slurp(fs::path(c.outDir) / "dataset.json"));
  CHECK(j["files"].size() == 3);
  GtVideo gt = readGtCsv((fs::path(c.outDir) / "val_seed50.csv").string());
  CHECK(gt.size() == 4);
}

TEST_CASE("sweep emits a row per value with the table schema") {
  TempDir dir("smr_sweep_test");
  RunConfig c = tinyRun((dir.path / "run").string());
  c.train.epochs = 1;
  std::vector<SweepRow> rows = cmdSweep(c, "c_prop", {"0.05", "0.5"});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].value == "0.05");
  std::string csv = slurp(fs::path(c.outDir) / "sweep.csv");
  CHECK(csv.find("c_prop,AP,HOTA,DetA,AssA,MOTA,IDF1") == 0);
  auto j = nlohmann::json::parse(slurp(fs::path(c.outDir) / "sweep.json"));
  CHECK(j.size() == 2);
  CHECK(j[0]["metrics"].contains("HOTA"));
  CHECK_THROWS_AS(cmdSweep(c, "nope", {"1"}), std::invalid_argument);
}
